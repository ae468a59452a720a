#include <iostream>

#include "dmtl/experiment.hpp"

int main(int argc, char** argv) { return dmtl::run_cli(argc, argv, std::cout, std::cerr); }
