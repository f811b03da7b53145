// c3po: simulate -> featurize -> make-dataset -> screen -> train -> evaluate,
// plus serve, report and reproduce.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "c3po/http.hpp"
#include "c3po/pipeline.hpp"

extern char** environ;

namespace {

using namespace c3po;

constexpr int kUsageExit = 2;

std::string flag_name(const std::string& key) {
  std::string out = "--" + key;
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

Config load_config_file(const std::string& path) {
  return path.empty() ? Config{} : Config::parse(read_file(path));
}

const Stage& serve_stage() {
  static const Stage s{"serve",
                       "Serve /score, /rank, /feedback, /admin/reload and /healthz over HTTP",
                       {{"listen", "127.0.0.1:8080", "host:port to bind"},
                        {"model", "model.bin", "model file loaded at startup", true},
                        {"policy_store", "", "throttle-state file, loaded at start and saved on exit", true},
                        {"hourly_cap", "3", "displays per user and type per hour"},
                        {"initial_threshold", "0.5", "starting score threshold"}},
                       nullptr};
  return s;
}

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }

int serve(const fs::path& workdir, const Config& cfg) {
  ThrottleConfig tc;
  tc.hourly_cap = cfg.get<std::int64_t>("hourly_cap");
  tc.initial_threshold = cfg.get<double>("initial_threshold");
  ScoringService svc(tc);
  svc.load((workdir / cfg.str("model")).string());
  const std::string store = cfg.str("policy_store");
  const auto store_path = workdir / store;
  if (!store.empty() && fs::exists(store_path)) svc.policies().import_text(read_file(store_path.string()));

  const auto addr = parse_listen(cfg.str("listen"));
  httplib::Server srv;
  bind_service(srv, svc);
  if (!srv.bind_to_port(addr.host, addr.port)) throw Error(ErrorCode::IoError, "cannot bind " + cfg.str("listen"));
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread watcher([&] {
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    srv.stop();
  });
  std::cout << "serving model " << svc.current()->version << " on " << addr.host << ":" << addr.port << std::endl;
  srv.listen_after_bind();
  g_stop = true;
  watcher.join();
  if (!store.empty()) write_file(store_path.string(), svc.policies().export_text());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pop-up recommendation pipeline and scoring service"};
  app.require_subcommand(1);
  std::string workdir = ".";
  std::string config_path;
  app.add_option("--workdir", workdir, "directory all artifact paths are relative to");
  app.add_option("--config", config_path, "key = value config file (flags and C3PO_* variables override it)");

  std::vector<const Stage*> all;
  for (const auto& s : stages()) all.push_back(&s);
  all.push_back(&serve_stage());

  std::map<std::string, std::map<std::string, std::string>> flag_values;
  std::map<std::string, CLI::App*> subs;
  for (const Stage* s : all) {
    auto* sub = app.add_subcommand(s->name, s->help);
    subs[s->name] = sub;
    for (const auto& k : s->keys) {
      const std::string text = k.help + (k.default_value.empty() ? "" : " [" + k.default_value + "]");
      sub->add_option(flag_name(k.key), flag_values[s->name][k.key], text);
    }
  }
  std::string manifest_path, scratch = "reproduce";
  auto* repro = app.add_subcommand("reproduce", "Re-run a manifest and compare output checksums");
  repro->add_option("--manifest", manifest_path, "manifest written by an earlier run")->required();
  repro->add_option("--scratch", scratch, "directory for the re-run, relative to the work directory [reproduce]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kUsageExit;
  }

  try {
    const fs::path wd(workdir);
    if (repro->parsed()) {
      const auto bad = reproduce(wd / manifest_path, wd, wd / scratch);
      if (!bad.empty()) {
        std::cerr << "checksum mismatch:";
        for (const auto& k : bad) std::cerr << ' ' << k;
        std::cerr << "\n";
        return static_cast<int>(ErrorCode::ChecksumMismatch);
      }
      std::cout << "reproduced: every output checksum matches\n";
      return 0;
    }
    for (const Stage* s : all) {
      CLI::App* sub = subs[s->name];
      if (!sub->parsed()) continue;
      Config flags;
      for (const auto& k : s->keys) {
        if (sub->count(flag_name(k.key))) flags.set(k.key, flag_values[s->name][k.key]);
      }
      const Config cfg = resolve_config(*s, load_config_file(config_path), flags, Config::from_env(environ));
      if (s == &serve_stage()) return serve(wd, cfg);
      const auto m = run_stage(*s, wd, cfg);
      for (const auto& out : m.outputs) std::cout << "wrote " << (wd / out.path).string() << "  " << out.checksum << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsageExit;
}
