#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << pfn::cli::usage();
    return pfn::cli::kUsageError;
  }
  return pfn::cli::run(argv[1], std::vector<std::string>(argv + 2, argv + argc), std::cout, std::cerr);
}
