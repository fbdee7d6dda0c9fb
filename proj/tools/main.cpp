#include <spdlog/spdlog.h>

#include <iostream>

#include "cli_common.hpp"
#include "dated/common/error.hpp"

namespace dated::cli {

tok::BpeTokenizer find_tokenizer(const std::optional<fs::path>& explicit_path,
                                 const fs::path& checkpoint) {
  if (explicit_path) return tok::BpeTokenizer::load(*explicit_path);
  const fs::path dir = checkpoint.parent_path();
  for (const auto& candidate : {dir / "tokenizer.json", dir.parent_path() / "tokenizer.json"}) {
    if (fs::exists(candidate)) {
      spdlog::info("using tokenizer {}", candidate.string());
      return tok::BpeTokenizer::load(candidate);
    }
  }
  throw InvalidArgument("no tokenizer.json beside " + checkpoint.string() +
                        "; pass --tokenizer");
}

void print_json(const Json& value) {
  std::cout << value.dump(2, ' ', false, Json::error_handler_t::replace) << "\n";
}

}  // namespace dated::cli

int main(int argc, char** argv) {
  CLI::App app{"Build, probe and serve language models with a hard training-data cutoff."};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.parse_complete_callback([&] {
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  });
  spdlog::set_pattern("[%H:%M:%S] %v");

  dated::cli::add_data_commands(app);
  dated::cli::add_train_commands(app);
  dated::cli::add_curate_commands(app);
  dated::cli::add_eval_commands(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const dated::cli::ExitWith& e) {
    return e.code;
  } catch (const dated::LeakageError& e) {
    std::cerr << "refused [" << e.code() << "]: " << e.what() << "\n";
    return dated::cli::kCheckFailed;
  } catch (const dated::Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
