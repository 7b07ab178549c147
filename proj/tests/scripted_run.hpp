#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "eqdisc/search.hpp"

namespace eqdisc::scripted {

// Model replies for a short Burgers run; the true skeleton first shows up at
// iteration 3, written in non-canonical order with literal coefficients.
inline std::vector<std::string> burgers_script() {
  return {
      "Here are some ideas:\n```\nu\nu_x\nu*u_x\nu^2 + u_xxx\nx*u_x\n```",
      "1. u_xx\n2. u*u_x + u\n3. u_xx + u^3\n4. u_x*u_xx",
      "1. u + u_xx\n2. u*u_x + u_x\n3. u^2*u_x\n4. u_xxxx + u",
      "```\n0.1*u_xx - u*u_x\nu*u_x + u_xx + u^2\nu_xx + x\n```",
      "1. u*u_x + u_xx - u_xxx\n2. u_xx*u\n3. sin(u)",
      "- u_xxx + u_xx\n- u*u_xx + u_x",
  };
}

inline SearchConfig burgers_script_config() {
  SearchConfig cfg;
  cfg.P = 5;
  cfg.seed = 42;
  cfg.fallback_enabled = false;
  return cfg;
}

// Runs the script through a recording backend and returns the transcript path.
inline std::string record_burgers_transcript(const PdeGrid& grid, const std::filesystem::path& path) {
  std::filesystem::remove(path);
  auto mock = std::make_shared<MockBackend>(burgers_script());
  RecordingBackend rec(mock, path.string(), "scripted", 0.9);
  run_search(grid, SymbolLibrary::pde_default(), burgers_script_config(), rec, EvalConfig{});
  return path.string();
}

}  // namespace eqdisc::scripted
