#include <iostream>

#include "bigsr/cli.hpp"

int main(int argc, char** argv) { return bigsr::run_cli(argc, argv, std::cout, std::cerr); }
