#include <iostream>

#include "attnamer/commands.hpp"

int main(int argc, char** argv) {
  return attnamer::run_cli(argc, argv, std::cout, std::cerr);
}
