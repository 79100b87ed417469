#include "lpiqa/cli.hpp"

int main(int argc, char** argv) { return lpiqa::cli::run(argc, argv); }
