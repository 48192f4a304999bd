#include "superres/cli.hpp"

int main(int argc, char** argv) { return superres::cli::run(argc, argv); }
