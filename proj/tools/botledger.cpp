#include "botledger/cli.hpp"

int main(int argc, char** argv) { return botledger::run(argc, argv); }
