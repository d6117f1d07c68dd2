#include "cli.hpp"

int main(int argc, char** argv) { return fmvp::cli::run(argc, argv); }
