#include <iostream>

#include "gsat/cli.hpp"

int main(int argc, char** argv) { return gsat::run_cli(argc, argv, std::cin, std::cout, std::cerr); }
