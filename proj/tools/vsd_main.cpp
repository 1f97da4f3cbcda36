#include "vsd/cli.h"

int main(int argc, char** argv) { return vsd::cli::run(argc, argv); }
