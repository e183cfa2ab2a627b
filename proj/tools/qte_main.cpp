#include <iostream>

#include "qte/cli.hpp"

int main(int argc, char** argv) { return qte::run_cli(argc, argv, std::cout, std::cerr); }
