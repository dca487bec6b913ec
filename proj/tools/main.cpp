#include "cli.hpp"

int main(int argc, char** argv) { return chpd::cli::run(argc, argv); }
