#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace CLI {
class App;
}

namespace bets::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,        ///< bad flags, unreadable input, table parse errors
  kEmptyCohort = 3,
  kModuleError = 4,
};

/// Runs the command line in-process; argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct DocumentedCommand {
  std::string name;
  std::vector<std::string> flags;  ///< long flag names without dashes
};

/// Flag table shown in the README and checked against the parser.
const std::vector<DocumentedCommand>& documented_commands();

struct Settings;

/// The full parser with every subcommand and the storage its flags bind to.
class Parser {
 public:
  Parser();
  ~Parser();
  CLI::App& app() { return *app_; }
  Settings& settings() { return *settings_; }

 private:
  std::unique_ptr<Settings> settings_;
  std::unique_ptr<CLI::App> app_;
};

}  // namespace bets::cli
