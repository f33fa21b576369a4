#include "discfb/cli.hpp"

int main(int argc, char** argv) { return discfb::cli::run(argc, argv); }
