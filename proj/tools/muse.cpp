#include <string>
#include <vector>

#include "muse/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return muse::cli::dispatch(std::move(args));
}
