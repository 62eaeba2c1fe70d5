#include "mots/cli.hpp"

int main(int argc, char** argv) { return mots::cli_main(argc, argv); }
