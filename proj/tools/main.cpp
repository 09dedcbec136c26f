#include <iostream>

#include "bscaling/cli.hpp"

int main(int argc, char** argv) {
  return bscaling::run_cli(argc, argv, std::cout, std::cerr);
}
