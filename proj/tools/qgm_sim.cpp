#include <iostream>

#include "qgm/cli.hpp"

int main(int argc, char** argv) { return qgm::cli::run_cli(argc, argv, std::cout, std::cerr); }
