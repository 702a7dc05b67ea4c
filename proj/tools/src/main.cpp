#include <iostream>

#include "a3s_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return a3s::cli::run(args, std::cout, std::cerr);
}
