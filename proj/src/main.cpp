#include "tagi/cli.hpp"

int main(int argc, char** argv) { return tagi::cli::run(argc, argv); }
