#include "hgs/cli.hpp"

int main(int argc, char** argv) { return hgs::cli::run(argc, argv); }
