#include <iostream>

#include "ensplan/cli.hpp"

int main(int argc, char** argv) { return ensplan::cli::run_cli(argc, argv, std::cout, std::cerr); }
