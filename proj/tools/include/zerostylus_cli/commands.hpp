#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "zerostylus/corpus.hpp"
#include "zerostylus/error.hpp"

namespace zerostylus::cli {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBackend = 3;
inline constexpr int kExitRepo = 4;
inline constexpr int kExitUsage = 5;

/// Wrong number of inputs for a command.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorCode code) noexcept;

/// `.jsonl` files are corpora; anything else is one plain-text document named
/// after the file stem.
std::vector<corpus::RawDocument> load_documents(const std::filesystem::path& path);

/// Output directory with a lock file. Files are staged in a hidden directory
/// and moved into place by commit(); an uncommitted run leaves nothing behind.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir);
  ~OutputDir();
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  const std::filesystem::path& path() const noexcept { return dir_; }
  void write(const std::string& name, std::string_view content);
  void commit();

 private:
  std::filesystem::path dir_;
  std::filesystem::path lock_;
  std::filesystem::path staging_;
  std::vector<std::string> staged_;
  bool created_dir_ = false;
  bool committed_ = false;
};

/// Full command line (argv[0] included). Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace zerostylus::cli
