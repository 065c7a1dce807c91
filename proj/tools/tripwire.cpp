#include <tripwire/cli.hpp>

int main(int argc, char** argv) {
    return tripwire::cli::run(argc, argv);
}
