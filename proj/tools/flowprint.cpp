#include <iostream>

#include "flowprint/cli.hpp"

int main(int argc, char** argv) { return flowprint::run_cli(argc, argv, std::cout, std::cerr); }
