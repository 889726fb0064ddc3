#include <iostream>
#include <string>
#include <vector>

#include "setalign/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return setalign::cli::run(args, std::cout, std::cerr);
}
