#include "agg/adversarial/discriminator.hpp"

#include <cmath>
#include <string>

#include "agg/error.hpp"

namespace agg::adv {

void DiscriminatorConfig::validate() const {
  for (std::size_t c : conv_channels) require(c >= 1, ErrorKind::config, "discriminator channels must be positive");
  require(kernel_width % 2 == 1, ErrorKind::config, "discriminator kernel width must be odd");
  require(stride >= 1, ErrorKind::config, "discriminator stride must be positive");
}

Discriminator::Discriminator(DiscriminatorConfig config, std::size_t terminal_width, std::size_t nonterminal_width,
                             std::uint64_t init_seed)
    : config_(config), terminal_width_(terminal_width), nonterminal_width_(nonterminal_width) {
  config_.validate();
  require(terminal_width >= 1 && nonterminal_width >= 1, ErrorKind::config, "discriminator input widths must be positive");
  auto build = [&](std::array<nn::Conv1dLayer, 3>& convs, const std::string& name, std::size_t in) {
    for (std::size_t i = 0; i < 3; ++i) {
      const std::size_t out = config_.conv_channels[i];
      convs[i] = nn::Conv1dLayer(name + ".conv" + std::to_string(i + 1), in, out, config_.kernel_width, config_.stride,
                                 config_.padding);
      in = out;
    }
  };
  build(terminal_convs_, "D.t", terminal_width);
  build(nonterminal_convs_, "D.n", nonterminal_width);
  head_ = nn::DenseLayer("D.out", 2 * config_.conv_channels[2], 1, nn::Activation::none);

  Rng rng(init_seed);
  for (auto& c : terminal_convs_) c.init(rng);
  for (auto& c : nonterminal_convs_) c.init(rng);
  head_.init(rng);
}

nn::ParamList Discriminator::parameters() {
  nn::ParamList out;
  for (auto& c : terminal_convs_) c.collect(out);
  for (auto& c : nonterminal_convs_) c.collect(out);
  head_.collect(out);
  return out;
}

nn::Var Discriminator::stack(nn::Tape& tape, std::array<nn::Conv1dLayer, 3>& convs, nn::Var x, nn::SeqShape shape) {
  for (auto& conv : convs) {
    nn::SeqShape next;
    x = nn::leaky_relu(conv.forward(tape, x, shape, &next), nn::kLeakySlope);
    shape = next;
  }
  return nn::mean_pool_time(x, shape);
}

nn::Var Discriminator::logits(nn::Tape& tape, nn::Var terminals, nn::Var nonterminals, nn::SeqShape shape) {
  require(shape.batch >= 1 && shape.length >= 1, ErrorKind::input, "discriminator: empty sequence");
  require(terminals.rows() == shape.batch * shape.length && nonterminals.rows() == terminals.rows(),
          ErrorKind::dimension, "discriminator: terminal and non-terminal streams must align");
  require(terminals.cols() == static_cast<Eigen::Index>(terminal_width_), ErrorKind::dimension,
          "discriminator: terminal width mismatch");
  require(nonterminals.cols() == static_cast<Eigen::Index>(nonterminal_width_), ErrorKind::dimension,
          "discriminator: non-terminal width mismatch");
  nn::Var ft = stack(tape, terminal_convs_, terminals, shape);
  nn::Var fn = stack(tape, nonterminal_convs_, nonterminals, shape);
  return head_.forward(tape, nn::concat_cols(ft, fn));
}

double Discriminator::discriminate(const std::vector<grammar::TerminalVec>& t_seq,
                                   const std::vector<grammar::NonTerminalState>& n_seq) {
  require(!t_seq.empty(), ErrorKind::input, "discriminate: empty sequence");
  require(t_seq.size() == n_seq.size(), ErrorKind::input,
          "discriminate: " + std::to_string(t_seq.size()) + " terminals vs " + std::to_string(n_seq.size()) +
              " non-terminals (pass N_1..N_L)");
  const auto len = static_cast<Eigen::Index>(t_seq.size());
  nn::Matrix t(len, static_cast<Eigen::Index>(terminal_width_));
  nn::Matrix n(len, static_cast<Eigen::Index>(nonterminal_width_));
  for (Eigen::Index j = 0; j < len; ++j) {
    const auto& tv = t_seq[static_cast<std::size_t>(j)].values;
    const auto& nv = n_seq[static_cast<std::size_t>(j)].values;
    require(tv.size() == terminal_width_ && nv.size() == nonterminal_width_, ErrorKind::dimension,
            "discriminate: width mismatch at step " + std::to_string(j));
    t.row(j) = nn::row_matrix(tv);
    n.row(j) = nn::row_matrix(nv);
  }
  nn::Tape tape;
  const double z = logits(tape, tape.constant(std::move(t)), tape.constant(std::move(n)), {1, len}).scalar();
  return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace agg::adv
