#include "cli.hpp"

int main(int argc, char** argv) { return elastrec::cli::run(argc, argv); }
