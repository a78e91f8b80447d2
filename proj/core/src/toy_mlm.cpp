#include "conslab/toy_mlm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace conslab {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'C', 'L', 'T', 'O', 'Y', 'M', 'L', 'M'};
constexpr std::uint32_t kCheckpointVersion = 1;

// out (n x m) = a (n x k) * b (k x m)
void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  out = Matrix(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto brow = b.row(k);
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
}

// acc (k x m) += a^T (k x n) * b (n x m)
void add_at_b(const Matrix& a, const Matrix& b, Matrix& acc) {
  for (std::size_t n = 0; n < a.rows; ++n) {
    const auto arow = a.row(n);
    const auto brow = b.row(n);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double ak = arow[k];
      if (ak == 0.0) continue;
      auto accrow = acc.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) accrow[j] += ak * brow[j];
    }
  }
}

// out (n x k) = a (n x m) * b^T, b is (k x m)
void matmul_bt(const Matrix& a, const Matrix& b, Matrix& out) {
  out = Matrix(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const auto arow = a.row(i);
    for (std::size_t k = 0; k < b.rows; ++k) {
      const auto brow = b.row(k);
      double sum = 0.0;
      for (std::size_t j = 0; j < a.cols; ++j) sum += arow[j] * brow[j];
      out(i, k) = sum;
    }
  }
}

void add_rows(const Matrix& a, Matrix& bias) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < a.cols; ++j) bias(0, j) += arow[j];
  }
}

void add_in_place(Matrix& a, const Matrix& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

template <class T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ModelError("truncated checkpoint");
  return value;
}

}  // namespace

ToyParams ToyParams::zeros(std::size_t vocab, const ToyDims& dims) {
  const auto d = dims.model;
  const auto h = dims.hidden;
  ToyParams p;
  p.token_emb = Matrix(vocab, d);
  p.pos_emb = Matrix(dims.max_len, d);
  p.w_query = Matrix(d, d);
  p.w_key = Matrix(d, d);
  p.w_value = Matrix(d, d);
  p.w_attn_out = Matrix(d, d);
  p.w_ff_in = Matrix(d, h);
  p.b_ff_in = Matrix(1, h);
  p.w_ff_out = Matrix(h, d);
  p.b_ff_out = Matrix(1, d);
  p.w_vocab = Matrix(d, vocab);
  p.b_vocab = Matrix(1, vocab);
  return p;
}

void ToyParams::add_scaled(const ToyParams& other, double scale) {
  std::vector<const Matrix*> src;
  other.for_each([&](std::string_view, const Matrix& m) { src.push_back(&m); });
  std::size_t i = 0;
  for_each([&](std::string_view, Matrix& m) {
    const auto& o = *src[i++];
    for (std::size_t k = 0; k < m.data.size(); ++k) m.data[k] += scale * o.data[k];
  });
}

bool ToyParams::all_finite() const {
  bool ok = true;
  for_each([&](std::string_view, const Matrix& m) {
    ok = ok && std::all_of(m.data.begin(), m.data.end(),
                           [](double v) { return std::isfinite(v); });
  });
  return ok;
}

ToyMlm::ToyMlm(Vocabulary vocab, ToyDims dims)
    : vocab_(std::move(vocab)), dims_(dims), params_(ToyParams::zeros(vocab_.size(), dims)) {
  if (dims_.model == 0 || dims_.hidden == 0 || dims_.max_len == 0) {
    throw ModelError("toy model dimensions must be positive");
  }
}

ToyMlm ToyMlm::random(Vocabulary vocab, ToyDims dims, std::uint64_t seed, double scale) {
  ToyMlm model(std::move(vocab), dims);
  Rng rng(seed);
  model.params_.for_each([&](std::string_view name, Matrix& m) {
    if (name.starts_with("b_")) return;
    for (auto& v : m.data) v = scale * standard_normal(rng);
  });
  return model;
}

ForwardCache ToyMlm::forward(std::span<const std::size_t> ids) const {
  const auto T = ids.size();
  const auto d = dims_.model;
  if (T == 0) throw ModelError("empty input sequence");
  if (T > dims_.max_len) {
    throw ModelError("sequence length " + std::to_string(T) + " exceeds positional table (" +
                     std::to_string(dims_.max_len) + ")");
  }
  const auto& p = params_;
  ForwardCache c;
  c.ids.assign(ids.begin(), ids.end());
  c.input = Matrix(T, d);
  for (std::size_t t = 0; t < T; ++t) {
    if (ids[t] >= vocab_.size()) throw ModelError("token id out of range");
    const auto e = p.token_emb.row(ids[t]);
    const auto pe = p.pos_emb.row(t);
    auto x = c.input.row(t);
    for (std::size_t j = 0; j < d; ++j) x[j] = e[j] + pe[j];
  }

  matmul(c.input, p.w_query, c.query);
  matmul(c.input, p.w_key, c.key);
  matmul(c.input, p.w_value, c.value);

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  matmul_bt(c.query, c.key, c.attn);
  for (std::size_t t = 0; t < T; ++t) {
    auto row = c.attn.row(t);
    double hi = -INFINITY;
    for (auto& s : row) {
      s *= scale;
      hi = std::max(hi, s);
    }
    double total = 0.0;
    for (auto& s : row) {
      s = std::exp(s - hi);
      total += s;
    }
    for (auto& s : row) s /= total;
  }
  matmul(c.attn, c.value, c.context);

  Matrix attn_out;
  matmul(c.context, p.w_attn_out, attn_out);
  c.residual = c.input;
  add_in_place(c.residual, attn_out);

  matmul(c.residual, p.w_ff_in, c.ff_act);
  for (std::size_t t = 0; t < T; ++t) {
    auto row = c.ff_act.row(t);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = std::tanh(row[j] + p.b_ff_in(0, j));
  }
  Matrix ff_out;
  matmul(c.ff_act, p.w_ff_out, ff_out);
  c.hidden = c.residual;
  for (std::size_t t = 0; t < T; ++t) {
    auto row = c.hidden.row(t);
    const auto f = ff_out.row(t);
    for (std::size_t j = 0; j < d; ++j) row[j] += f[j] + p.b_ff_out(0, j);
  }
  return c;
}

std::vector<double> ToyMlm::logits_at(const ForwardCache& cache, std::size_t position) const {
  if (position >= cache.ids.size()) throw ModelError("mask position out of range");
  const auto V = vocab_.size();
  std::vector<double> logits(params_.b_vocab.data.begin(), params_.b_vocab.data.end());
  const auto h = cache.hidden.row(position);
  for (std::size_t j = 0; j < dims_.model; ++j) {
    const auto w = params_.w_vocab.row(j);
    for (std::size_t v = 0; v < V; ++v) logits[v] += h[j] * w[v];
  }
  return logits;
}

MaskOutput ToyMlm::forward_at(std::span<const std::size_t> ids, std::size_t mask_position) const {
  if (mask_position >= ids.size()) throw ModelError("mask position out of range");
  const auto cache = forward(ids);
  MaskOutput out;
  out.logits = logits_at(cache, mask_position);
  const auto h = cache.hidden.row(mask_position);
  out.hidden.assign(h.begin(), h.end());
  return out;
}

void ToyMlm::backward(const ForwardCache& c, std::span<const LogitGrad> upstream,
                      ToyParams& g) const {
  const auto T = c.ids.size();
  const auto d = dims_.model;
  const auto V = vocab_.size();
  const auto& p = params_;

  // Vocabulary head.
  Matrix d_hidden(T, d);
  for (const auto& u : upstream) {
    const auto h = c.hidden.row(u.position);
    auto dh = d_hidden.row(u.position);
    for (std::size_t j = 0; j < d; ++j) {
      auto gw = g.w_vocab.row(j);
      const auto w = p.w_vocab.row(j);
      double acc = 0.0;
      for (std::size_t v = 0; v < V; ++v) {
        gw[v] += h[j] * u.grad[v];
        acc += w[v] * u.grad[v];
      }
      dh[j] += acc;
    }
    for (std::size_t v = 0; v < V; ++v) g.b_vocab(0, v) += u.grad[v];
  }

  // Feed-forward block with residual.
  Matrix d_residual = d_hidden;
  add_at_b(c.ff_act, d_hidden, g.w_ff_out);
  add_rows(d_hidden, g.b_ff_out);
  Matrix d_pre;
  matmul_bt(d_hidden, p.w_ff_out, d_pre);
  for (std::size_t i = 0; i < d_pre.data.size(); ++i) {
    const double a = c.ff_act.data[i];
    d_pre.data[i] *= 1.0 - a * a;
  }
  add_at_b(c.residual, d_pre, g.w_ff_in);
  add_rows(d_pre, g.b_ff_in);
  Matrix tmp;
  matmul_bt(d_pre, p.w_ff_in, tmp);
  add_in_place(d_residual, tmp);

  // Attention block with residual.
  Matrix d_input = d_residual;
  add_at_b(c.context, d_residual, g.w_attn_out);
  Matrix d_context;
  matmul_bt(d_residual, p.w_attn_out, d_context);

  Matrix d_attn;
  matmul_bt(d_context, c.value, d_attn);
  Matrix d_value(T, d);
  add_at_b(c.attn, d_context, d_value);

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix d_scores(T, T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto a = c.attn.row(t);
    const auto da = d_attn.row(t);
    double dot = 0.0;
    for (std::size_t u = 0; u < T; ++u) dot += a[u] * da[u];
    for (std::size_t u = 0; u < T; ++u) d_scores(t, u) = a[u] * (da[u] - dot) * scale;
  }
  Matrix d_query;
  matmul(d_scores, c.key, d_query);
  Matrix d_key(T, d);
  add_at_b(d_scores, c.query, d_key);

  add_at_b(c.input, d_query, g.w_query);
  add_at_b(c.input, d_key, g.w_key);
  add_at_b(c.input, d_value, g.w_value);
  matmul_bt(d_query, p.w_query, tmp);
  add_in_place(d_input, tmp);
  matmul_bt(d_key, p.w_key, tmp);
  add_in_place(d_input, tmp);
  matmul_bt(d_value, p.w_value, tmp);
  add_in_place(d_input, tmp);

  for (std::size_t t = 0; t < T; ++t) {
    const auto dx = d_input.row(t);
    auto ge = g.token_emb.row(c.ids[t]);
    auto gp = g.pos_emb.row(t);
    for (std::size_t j = 0; j < d; ++j) {
      ge[j] += dx[j];
      gp[j] += dx[j];
    }
  }
}

void ToyMlm::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::uint64_t>(dims_.model));
  write_pod(out, static_cast<std::uint64_t>(dims_.hidden));
  write_pod(out, static_cast<std::uint64_t>(dims_.max_len));
  write_pod(out, static_cast<std::uint64_t>(vocab_.size()));
  for (const auto& token : vocab_.tokens()) {
    write_pod(out, static_cast<std::uint32_t>(token.size()));
    out.write(token.data(), static_cast<std::streamsize>(token.size()));
  }
  params_.for_each([&](std::string_view, const Matrix& m) {
    write_pod(out, static_cast<std::uint64_t>(m.rows));
    write_pod(out, static_cast<std::uint64_t>(m.cols));
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  });
  if (!out) throw ModelError("failed writing checkpoint " + path.string());
}

ToyMlm ToyMlm::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ModelError(path.string() + ": not a toy MLM checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ModelError(path.string() + ": unsupported checkpoint version " +
                     std::to_string(version));
  }
  ToyDims dims;
  dims.model = read_pod<std::uint64_t>(in);
  dims.hidden = read_pod<std::uint64_t>(in);
  dims.max_len = read_pod<std::uint64_t>(in);
  const auto vocab_size = read_pod<std::uint64_t>(in);
  std::vector<std::string> tokens;
  for (std::uint64_t i = 0; i < vocab_size; ++i) {
    const auto len = read_pod<std::uint32_t>(in);
    std::string token(len, '\0');
    in.read(token.data(), len);
    tokens.push_back(std::move(token));
  }
  if (tokens.size() < 2 || tokens[0] != kUnknownToken || tokens[1] != kMaskToken) {
    throw ModelError(path.string() + ": vocabulary must start with [UNK] [MASK]");
  }
  const std::span<const std::string> body(tokens.data() + 2, tokens.size() - 2);
  ToyMlm model(Vocabulary(body), dims);
  if (model.vocab_.size() != vocab_size) throw ModelError(path.string() + ": duplicate tokens");
  model.params_.for_each([&](std::string_view name, Matrix& m) {
    const auto rows = read_pod<std::uint64_t>(in);
    const auto cols = read_pod<std::uint64_t>(in);
    if (rows != m.rows || cols != m.cols) {
      throw ModelError(path.string() + ": shape mismatch in block " + std::string(name));
    }
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!in) throw ModelError(path.string() + ": truncated block " + std::string(name));
  });
  return model;
}

}  // namespace conslab
