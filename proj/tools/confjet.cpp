#include <iostream>
#include <string>
#include <vector>

#include "confjet/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return confjet::cli::run(args, std::cout, std::cerr);
}
