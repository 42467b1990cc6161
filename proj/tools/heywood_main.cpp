#include <iostream>
#include <string>
#include <vector>

#include "heywood/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return heywood::cli::main(args, std::cout, std::cerr);
}
