#include "encqr/cli.hpp"

int main(int argc, char** argv) { return encqr::cli::main(argc, argv); }
