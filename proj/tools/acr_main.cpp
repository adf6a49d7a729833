#include "acr/cli.hpp"

int main(int argc, char** argv) { return acr::cli::run(argc, argv); }
