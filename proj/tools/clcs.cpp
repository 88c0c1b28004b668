#include <iostream>

#include "clcs/cli.hpp"

int main(int argc, char** argv) { return clcs::cli::run_cli(argc, argv, std::cout, std::cerr); }
