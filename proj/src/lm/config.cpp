#include "sptok/lm/config.hpp"

#include <string>

#include "sptok/error.hpp"

namespace sptok::lm {

void LmConfig::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorCode::kInvalidConfig, what); };
  check(d_model > 0 && n_heads > 0 && d_model % n_heads == 0, "d_model must be a positive multiple of n_heads");
  check(n_layers > 0, "n_layers must be positive");
  check(context >= 3, "context must hold at least one token plus SEP and CLS");
  check(mlp_ratio > 0, "mlp_ratio must be positive");
  check(text_vocab > 0, "text_vocab must be positive");
  check(init_std > 0, "init_std must be positive");
  check(ln_eps > 0, "ln_eps must be positive");
}

nlohmann::json LmConfig::to_json() const {
  return {{"d_model", d_model},   {"n_layers", n_layers},     {"n_heads", n_heads},
          {"context", context},   {"mlp_ratio", mlp_ratio},   {"text_vocab", text_vocab},
          {"audio_vocab", audio_vocab}, {"seed", seed},       {"init_std", init_std},
          {"ln_eps", ln_eps}};
}

LmConfig LmConfig::from_json(const nlohmann::json& j) {
  LmConfig c;
  const auto known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    require(known.contains(key), ErrorCode::kInvalidConfig, "unknown lm key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::remove_reference_t<decltype(field)>>();
    };
    get("d_model", c.d_model);
    get("n_layers", c.n_layers);
    get("n_heads", c.n_heads);
    get("context", c.context);
    get("mlp_ratio", c.mlp_ratio);
    get("text_vocab", c.text_vocab);
    get("audio_vocab", c.audio_vocab);
    get("seed", c.seed);
    get("init_std", c.init_std);
    get("ln_eps", c.ln_eps);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("lm config: ") + e.what());
  }
  return c;
}

}  // namespace sptok::lm
