#include "topoembed/cli.hpp"

int main(int argc, char** argv) { return topoembed::cli::run(argc, argv); }
