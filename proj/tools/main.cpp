#include "qreg_cli.hpp"

int main(int argc, char** argv) { return qreg::cli::run(argc, argv); }
