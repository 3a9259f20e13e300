#include "agg/grammar/config.hpp"

#include <string>

#include "agg/error.hpp"

namespace agg::grammar {

EncoderMode parse_encoder_mode(std::string_view name) {
  if (name == "temporal_conv") return EncoderMode::temporal_conv;
  if (name == "gru") return EncoderMode::gru;
  fail(ErrorKind::config, "unknown encoder mode '" + std::string(name) + "'");
}

std::string_view to_string(EncoderMode m) {
  return m == EncoderMode::gru ? "gru" : "temporal_conv";
}

std::string_view to_string(TerminalMode m) {
  switch (m) {
    case TerminalMode::one_hot_class: return "one_hot_class";
    case TerminalMode::multi_label: return "multi_label";
    case TerminalMode::continuous: return "continuous";
  }
  return "continuous";
}

TerminalMode GrammarConfig::terminal_mode() const {
  switch (terminal_activation) {
    case nn::Activation::softmax: return TerminalMode::one_hot_class;
    case nn::Activation::sigmoid: return TerminalMode::multi_label;
    default: return TerminalMode::continuous;
  }
}

void GrammarConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    require(v > 0, ErrorKind::config, std::string(name) + " must be positive");
  };
  positive(d_nonterminal, "d_nonterminal");
  positive(d_terminal, "d_terminal");
  positive(num_rules, "num_rules");
  positive(branching_k, "branching_k");
  positive(rule_layers, "rule_layers");
  positive(expander_layers, "expander_layers");
  positive(input_width, "input_width");
  positive(encoder_channels, "encoder_channels");
  require(branching_k <= num_rules, ErrorKind::config, "branching_k must not exceed num_rules");
  if (topk_mask) {
    require(*topk_mask > 0, ErrorKind::config, "topk_mask must be positive");
    require(*topk_mask <= num_rules, ErrorKind::config, "topk_mask must not exceed num_rules");
  }
  require(gumbel_temperature > 0.0, ErrorKind::config, "gumbel_temperature must be positive");
  require(encoder_kernel % 2 == 1, ErrorKind::config, "encoder_kernel must be odd");
  require(terminal_activation == nn::Activation::softmax || terminal_activation == nn::Activation::sigmoid ||
              terminal_activation == nn::Activation::none,
          ErrorKind::config, "terminal_activation must be softmax, sigmoid or none");
}

GrammarConfig activity_preset(std::size_t num_classes) {
  GrammarConfig c;
  c.d_nonterminal = 64;
  c.d_terminal = num_classes;
  c.num_rules = 256;
  c.branching_k = 4;
  c.topk_mask = 4;
  c.terminal_activation = nn::Activation::softmax;
  c.rule_layers = 1;
  c.expander_layers = 1;
  c.encoder_mode = EncoderMode::temporal_conv;
  c.input_width = num_classes;
  c.encoder_channels = 512;
  return c;
}

GrammarConfig pose_preset() {
  GrammarConfig c;
  c.d_nonterminal = 1024;
  c.d_terminal = 128;
  c.num_rules = 2048;
  c.branching_k = 2;
  c.topk_mask = 2;
  c.terminal_activation = nn::Activation::none;
  c.rule_layers = 3;
  c.expander_layers = 3;
  c.encoder_mode = EncoderMode::gru;
  c.input_width = 128;
  c.encoder_channels = 1024;
  return c;
}

GrammarConfig pose_codebook_preset() {
  GrammarConfig c = pose_preset();
  c.terminal_codebook = 1024;
  return c;
}

GrammarConfig preset(std::string_view name, std::size_t num_classes) {
  if (name == "activity") return activity_preset(num_classes);
  if (name == "pose") return pose_preset();
  if (name == "pose_codebook") return pose_codebook_preset();
  fail(ErrorKind::config, "unknown grammar preset '" + std::string(name) + "'");
}

}  // namespace agg::grammar
