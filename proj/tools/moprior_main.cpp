#include <iostream>
#include <string>
#include <vector>

#include "moprior/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return moprior::cli::dispatch(std::move(args), std::cout);
}
