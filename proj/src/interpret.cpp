#include "percnn/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <sstream>

#include "percnn/rng.hpp"

namespace percnn {

Monomial make_monomial(std::vector<Symbol> symbols) {
  std::sort(symbols.begin(), symbols.end());
  return symbols;
}

Monomial operator*(const Monomial& a, const Monomial& b) {
  Monomial out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

PolyExpr PolyExpr::constant(double c) {
  PolyExpr p;
  p.add({}, c);
  return p;
}

PolyExpr PolyExpr::symbol(Symbol s, double coef) {
  PolyExpr p;
  p.add({s}, coef);
  return p;
}

PolyExpr& PolyExpr::add(const Monomial& m, double coef) {
  terms[m] += coef;
  return *this;
}

PolyExpr& PolyExpr::operator+=(const PolyExpr& o) {
  for (const auto& [m, c] : o.terms) terms[m] += c;
  return *this;
}

PolyExpr PolyExpr::operator*(const PolyExpr& o) const {
  PolyExpr out;
  for (const auto& [ma, ca] : terms)
    for (const auto& [mb, cb] : o.terms) out.terms[ma * mb] += ca * cb;
  return out;
}

PolyExpr PolyExpr::scaled(double s) const {
  PolyExpr out = *this;
  for (auto& [m, c] : out.terms) c *= s;
  return out;
}

PolyExpr& PolyExpr::normalize() {
  std::erase_if(terms, [](const auto& kv) { return kv.second == 0.0; });
  return *this;
}

double PolyExpr::coef(const Monomial& m) const {
  const auto it = terms.find(m);
  return it == terms.end() ? 0.0 : it->second;
}

std::size_t PolyExpr::degree() const {
  std::size_t d = 0;
  for (const auto& kv : terms) d = std::max(d, kv.first.size());
  return d;
}

double PolyExpr::evaluate(const std::function<double(const Symbol&)>& value) const {
  double s = 0.0;
  for (const auto& [m, c] : terms) {
    double t = c;
    for (const Symbol& sym : m) t *= value(sym);
    s += t;
  }
  return s;
}

std::string state_name(std::size_t channel, std::size_t n_channels) {
  static const char* const short_names[] = {"u", "v", "w"};
  if (n_channels <= 3) return short_names[channel];
  return "s" + std::to_string(channel);
}

std::string symbol_name(const Symbol& s, std::size_t n_channels) {
  const std::string base = state_name(s.channel, n_channels);
  switch (s.kind) {
    case SymbolKind::state: return base;
    case SymbolKind::dx: return base + "_x";
    case SymbolKind::dy: return base + "_y";
    case SymbolKind::dz: return base + "_z";
    case SymbolKind::lap: return "lap_" + base;
  }
  return "?";
}

std::string monomial_name(const Monomial& m, std::size_t n_channels) {
  if (m.empty()) return "1";
  std::string out;
  for (std::size_t i = 0; i < m.size();) {
    std::size_t j = i;
    while (j < m.size() && m[j] == m[i]) ++j;
    if (!out.empty()) out += '*';
    out += symbol_name(m[i], n_channels);
    if (j - i > 1) out += "^" + std::to_string(j - i);
    i = j;
  }
  return out;
}

namespace {

std::size_t ipow(std::size_t b, std::size_t e) {
  std::size_t r = 1;
  while (e--) r *= b;
  return r;
}

SymbolKind symbol_kind(FilterRole role) {
  switch (role) {
    case FilterRole::fixed_dx: return SymbolKind::dx;
    case FilterRole::fixed_dy: return SymbolKind::dy;
    case FilterRole::fixed_dz: return SymbolKind::dz;
    case FilterRole::fixed_laplacian: return SymbolKind::lap;
    case FilterRole::free_affine: break;
  }
  return SymbolKind::state;
}

std::vector<PolyExpr> expand(const ModelParams& params, const ModelConfig& config,
                             bool allow_frozen) {
  config.validate();
  validate_params(params, config);
  const std::size_t s = config.state_channels;
  const std::size_t c_feat = config.n_channels;
  const std::size_t k = config.filter_size;
  const std::size_t taps = ipow(k, config.rank());
  const std::size_t centre = (taps - 1) / 2;

  std::vector<PolyExpr> features(c_feat, PolyExpr::constant(1.0));
  for (std::size_t i = 0; i < config.n_parallel; ++i) {
    const Field& w = params.layer_w[i];
    const Field& b = params.layer_b[i];
    for (std::size_t j = 0; j < c_feat; ++j) {
      PolyExpr affine = PolyExpr::constant(b[j]);
      const FilterRole role = config.role(i, j);
      if (role != FilterRole::free_affine) {
        if (!allow_frozen)
          throw RoleError("layer " + std::to_string(i) + " channel " + std::to_string(j) +
                          " is a frozen " + to_string(role) +
                          " stencil; use the derivative-aware expansion");
        const FrozenFilter* fz = nullptr;
        for (const auto& f : config.frozen)
          if (f.layer == i && f.channel == j) fz = &f;
        affine.add({Symbol{symbol_kind(role), fz->state_channel}}, 1.0);
      } else {
        for (std::size_t in = 0; in < s; ++in) {
          const std::size_t base = (j * s + in) * taps;
          for (std::size_t t = 0; t < taps; ++t)
            if (t != centre && w[base + t] != 0.0)
              throw RoleError("layer " + std::to_string(i) + " channel " + std::to_string(j) +
                              " has a spatial free filter, which has no polynomial form");
          affine.add({Symbol{SymbolKind::state, in}}, w[base + centre]);
        }
      }
      features[j] = features[j] * affine.normalize();
    }
  }

  std::vector<PolyExpr> out(s);
  for (std::size_t c = 0; c < s; ++c) {
    PolyExpr e = PolyExpr::constant(params.agg_b[c]);
    for (std::size_t j = 0; j < c_feat; ++j) e += features[j].scaled(params.agg_w[c * c_feat + j]);
    if (config.highway == Highway::diffusion)
      e.add({Symbol{SymbolKind::lap, c}}, params.diff_coef[c]);
    out[c] = std::move(e.normalize());
  }
  return out;
}

// Random smooth periodic field: a few low Fourier modes per channel.
Field smooth_field(const ModelConfig& config, Rng& rng) {
  Field f(config.state_channels, config.grid, config.spacing);
  const std::size_t r = config.rank();
  std::vector<std::size_t> stride(r, 1);
  for (std::size_t a = r - 1; a-- > 0;) stride[a] = stride[a + 1] * config.grid[a + 1];
  for (std::size_t c = 0; c < f.channels(); ++c) {
    auto v = f.channel(c);
    for (int mode = 0; mode < 3; ++mode) {
      std::vector<double> kvec(r);
      for (auto& kv : kvec) kv = std::floor(rng.uniform(-2.0, 3.0));
      const double amp = rng.uniform(-0.5, 0.5);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t cell = 0; cell < v.size(); ++cell) {
        double arg = phase;
        for (std::size_t a = 0; a < r; ++a) {
          const double idx = static_cast<double>((cell / stride[a]) % config.grid[a]);
          arg += 2.0 * std::numbers::pi * kvec[a] * idx / static_cast<double>(config.grid[a]);
        }
        v[cell] += amp * std::sin(arg);
      }
    }
  }
  return f;
}

}  // namespace

std::vector<PolyExpr> expand_pointwise(const ModelParams& params, const ModelConfig& config) {
  return expand(params, config, false);
}

std::vector<PolyExpr> expand_with_derivatives(const ModelParams& params,
                                              const ModelConfig& config) {
  return expand(params, config, true);
}

PolyExpr prune(const PolyExpr& expr, double threshold) {
  if (!(threshold >= 0.0)) throw SpecError("prune threshold must be >= 0");
  PolyExpr out;
  for (const auto& [m, c] : expr.terms)
    if (!(std::abs(c) < threshold)) out.terms.emplace(m, c);
  return out;
}

std::vector<PolyExpr> prune(const std::vector<PolyExpr>& exprs, double threshold) {
  std::vector<PolyExpr> out;
  for (const auto& e : exprs) out.push_back(prune(e, threshold));
  return out;
}

double verify_extraction(const std::vector<PolyExpr>& exprs, const ModelParams& params,
                         const ModelConfig& config, std::size_t n_samples, std::uint64_t seed) {
  if (exprs.size() != config.state_channels)
    throw ShapeError("one expression per state channel required");
  Rng rng(seed);
  const std::size_t s = config.state_channels;
  double worst = 0.0;

  if (config.frozen.empty()) {
    // Pointwise: the Laplacian symbols are free draws added on both sides.
    ModelConfig strip = config;
    strip.grid.assign(config.rank(), 5);
    strip.grid.back() = std::max<std::size_t>(5, n_samples);
    strip.coarse_grid = strip.grid;
    Field state(s, strip.grid, strip.spacing);
    for (double& v : state.values()) v = rng.uniform(-1.0, 1.0);
    Field lap = state.zeros_like();
    for (double& v : lap.values()) v = rng.uniform(-1.0, 1.0);
    const Field net = product_term(state, params, strip);
    for (std::size_t cell = 0; cell < state.cells(); ++cell) {
      auto value = [&](const Symbol& sym) {
        if (sym.kind == SymbolKind::lap) return lap.channel(sym.channel)[cell];
        if (sym.kind != SymbolKind::state)
          throw RoleError("derivative symbol in a pointwise expression");
        return state.channel(sym.channel)[cell];
      };
      for (std::size_t c = 0; c < s; ++c) {
        double f = net.channel(c)[cell];
        if (!params.diff_coef.empty()) f += params.diff_coef[c] * lap.channel(c)[cell];
        worst = std::max(worst, std::abs(f - exprs[c].evaluate(value)));
      }
    }
    return worst;
  }

  if (config.bc != PadMode::periodic)
    throw SpecError("derivative verification needs periodic boundaries");
  const std::size_t cells = product_of(config.grid);
  const std::size_t n_fields = std::max<std::size_t>(1, (n_samples + cells - 1) / cells);
  for (std::size_t fi = 0; fi < n_fields; ++fi) {
    const Field state = smooth_field(config, rng);
    const Field net = pi_block_residual(state, params, config);
    const Field lap = laplacian(state);
    std::vector<Field> d;
    for (std::size_t a = 0; a < config.rank(); ++a) d.push_back(first_derivative(state, a));
    const std::size_t r = config.rank();
    for (std::size_t cell = 0; cell < cells; ++cell) {
      auto value = [&](const Symbol& sym) {
        switch (sym.kind) {
          case SymbolKind::state: return state.channel(sym.channel)[cell];
          case SymbolKind::dx: return d[r - 1].channel(sym.channel)[cell];
          case SymbolKind::dy: return d[r - 2].channel(sym.channel)[cell];
          case SymbolKind::dz: return d[r - 3].channel(sym.channel)[cell];
          case SymbolKind::lap: return lap.channel(sym.channel)[cell];
        }
        return 0.0;
      };
      for (std::size_t c = 0; c < s; ++c)
        worst = std::max(worst, std::abs(net.channel(c)[cell] - exprs[c].evaluate(value)));
    }
  }
  return worst;
}

namespace {

std::vector<std::pair<Monomial, double>> sorted_terms(const PolyExpr& e) {
  std::vector<std::pair<Monomial, double>> t(e.terms.begin(), e.terms.end());
  std::stable_sort(t.begin(), t.end(), [](const auto& a, const auto& b) {
    return std::abs(a.second) > std::abs(b.second);
  });
  return t;
}

std::string sig4(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%#.4g", v);
  return buf;
}

}  // namespace

std::string format_report(const std::vector<PolyExpr>& exprs) {
  std::ostringstream os;
  const std::size_t n = exprs.size();
  for (std::size_t c = 0; c < n; ++c) {
    os << state_name(c, n) << "_t =";
    const auto terms = sorted_terms(exprs[c]);
    if (terms.empty()) os << " 0";
    bool first = true;
    for (const auto& [m, coef] : terms) {
      const std::string mag = sig4(std::abs(coef));
      if (first)
        os << (coef < 0 ? " -" : " ") << mag;
      else
        os << (coef < 0 ? " - " : " + ") << mag;
      if (!m.empty()) os << '*' << monomial_name(m, n);
      first = false;
    }
    os << '\n';
  }
  return os.str();
}

void write_terms_csv(std::ostream& os, const std::vector<PolyExpr>& exprs) {
  os << "channel,monomial,coefficient\n";
  char buf[48];
  for (std::size_t c = 0; c < exprs.size(); ++c)
    for (const auto& [m, coef] : sorted_terms(exprs[c])) {
      std::snprintf(buf, sizeof buf, "%.17g", coef);
      os << state_name(c, exprs.size()) << ',' << monomial_name(m, exprs.size()) << ',' << buf
         << '\n';
    }
}

}  // namespace percnn
