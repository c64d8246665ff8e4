#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gradleak::cli {

// Exit codes: 0 success, 1 a case errored or a bench criterion failed,
// 2 usage, file or dimension errors.
inline constexpr int kOk = 0;
inline constexpr int kCaseFailed = 1;
inline constexpr int kUsage = 2;

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gradleak::cli
