#include <iostream>
#include <string>
#include <vector>

#include "hmlab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return hmlab::run_cli(args, std::cout, std::cerr);
}
