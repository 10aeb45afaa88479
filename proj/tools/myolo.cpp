#include <iostream>
#include <string>
#include <vector>

#include "myolo/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return myolo::cli::run(args, std::cout, std::cerr);
}
