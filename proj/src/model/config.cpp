#include "sage/model/config.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "sage/common/kv.hpp"

namespace sage::model {

namespace {

template <typename Fn>
void for_each_field(ModelConfig& c, Fn&& fn) {
    fn("n_layers", c.n_layers);
    fn("d_model", c.d_model);
    fn("n_heads", c.n_heads);
    fn("d_ff", c.d_ff);
    fn("vocab_nl", c.vocab_nl);
    fn("vocab_code", c.vocab_code);
    fn("max_seq_len", c.max_seq_len);
    fn("k_landmark", c.k_landmark);
    fn("local_window", c.local_window);
    fn("eps_rms", c.eps_rms);
    fn("beta_swish", c.beta_swish);
    fn("lambda_skepticism", c.lambda_skepticism);
    fn("tau_uncertainty", c.tau_uncertainty);
    fn("d_critic", c.d_critic);
    fn("inv_loss_weight", c.inv_loss_weight);
}

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("model config: " + what);
}

}  // namespace

void ModelConfig::validate() const {
    require(n_layers >= 1, "n_layers must be >= 1");
    require(d_model >= 1, "d_model must be >= 1");
    require(n_heads >= 1 && d_model % n_heads == 0, "d_model must be divisible by n_heads");
    require(d_model >= 2, "d_model must be >= 2 for the inverse head");
    require(d_ff >= 1, "d_ff must be >= 1");
    require(vocab_nl >= 1 && vocab_code >= 1, "vocabulary sizes must be positive");
    require(max_seq_len >= 1, "max_seq_len must be >= 1");
    require(k_landmark >= 1, "k_landmark must be >= 1");
    require(local_window >= 1, "local_window must be >= 1");
    require(eps_rms > 0.0, "eps_rms must be > 0");
    require(std::isfinite(beta_swish), "beta_swish must be finite");
    require(lambda_skepticism >= 0.0, "lambda_skepticism must be >= 0");
    require(!std::isnan(tau_uncertainty), "tau_uncertainty must not be NaN");
    require(d_critic >= 1, "d_critic must be >= 1");
    require(inv_loss_weight >= 0.0, "inv_loss_weight must be >= 0");
}

ModelConfig ModelConfig::full_scale() {
    ModelConfig c;
    c.n_layers = 64;
    c.k_landmark = 64;
    c.local_window = 4096;
    c.max_seq_len = 131072;
    c.eps_rms = 1e-6;
    return c;
}

ModelConfig parse_config(const std::string& text) {
    auto kv = parse_key_values(text);
    ModelConfig c;
    for_each_field(c, [&](const char* key, auto& field) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        if constexpr (std::is_same_v<std::decay_t<decltype(field)>, int>) {
            field = static_cast<int>(parse_int(key, it->second));
        } else {
            field = parse_double(key, it->second);
        }
        kv.erase(it);
    });
    if (!kv.empty()) throw std::invalid_argument("model config: unknown key '" + kv.begin()->first + "'");
    c.validate();
    return c;
}

std::string format_config(const ModelConfig& config) {
    ModelConfig c = config;
    std::ostringstream os;
    os.precision(17);
    for_each_field(c, [&](const char* key, auto& field) { os << key << " = " << field << '\n'; });
    return os.str();
}

ModelConfig load_config(const std::filesystem::path& path) { return parse_config(read_text_file(path)); }

void save_config(const std::filesystem::path& path, const ModelConfig& config) {
    write_text_file(path, format_config(config));
}

}  // namespace sage::model
