#include "cli.hpp"

#include "disfluent/runtime.hpp"

#include <iostream>

int main(int argc, char** argv) {
  disfluent::configure_runtime();
  return disfluent::cli::run(argc, argv, std::cout, std::cerr);
}
