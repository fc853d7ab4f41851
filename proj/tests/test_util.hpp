#pragma once

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace testutil {

struct CliResult {
    int exit_code = -1;
    std::string output; // stdout + stderr interleaved
};

#ifdef DATTN_CLI_PATH
// Runs the built CLI (path injected by CMake) and captures its output.
// `env` is an optional VAR=value prefix for the child process.
inline CliResult run_cli(const std::string& args, const std::string& env = "") {
    std::string cmd = env.empty() ? "" : "env " + env + " ";
    cmd += std::string(DATTN_CLI_PATH) + " " + args + " 2>&1";
    CliResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf;
    while (std::size_t got = std::fread(buf.data(), 1, buf.size(), pipe))
        r.output.append(buf.data(), got);
    const int status = pclose(pipe);
    if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    return r;
}
#endif // DATTN_CLI_PATH

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::string temp_dir() {
    char tmpl[] = "/tmp/dattn_test_XXXXXX";
    const char* dir = mkdtemp(tmpl);
    return dir ? dir : "/tmp";
}

} // namespace testutil
