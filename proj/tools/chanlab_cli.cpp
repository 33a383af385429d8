#include <iostream>

#include "chanlab/xcli.hpp"

int main(int argc, char** argv) { return chanlab::cli::run_cli(argc, argv, std::cout, std::cerr); }
