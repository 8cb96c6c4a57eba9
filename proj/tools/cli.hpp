#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>

namespace seps::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

/// Invalid key, value or combination in a run configuration.
class config_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Flat key=value settings; later sources override earlier ones.
using RunConfig = std::map<std::string, std::string>;

/// Parses `key=value` lines. Blank lines and `#` comments are skipped, keys
/// outside the known set are rejected.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

bool is_known_key(const std::string& key);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace seps::cli
