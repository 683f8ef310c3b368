#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "percnn/model.hpp"

namespace percnn {

enum class SymbolKind : std::uint32_t { state = 0, dx = 1, dy = 2, dz = 3, lap = 4 };

/// A state variable or one derivative of it.
struct Symbol {
  SymbolKind kind = SymbolKind::state;
  std::size_t channel = 0;

  auto operator<=>(const Symbol&) const = default;
};

/// Sorted multiset of symbols; empty is the constant 1.
using Monomial = std::vector<Symbol>;

Monomial make_monomial(std::vector<Symbol> symbols);
Monomial operator*(const Monomial& a, const Monomial& b);

/// Polynomial with real coefficients, one per state channel in extractions.
struct PolyExpr {
  std::map<Monomial, double> terms;

  static PolyExpr constant(double c);
  static PolyExpr symbol(Symbol s, double coef = 1.0);

  PolyExpr& add(const Monomial& m, double coef);
  PolyExpr& operator+=(const PolyExpr& o);
  PolyExpr operator*(const PolyExpr& o) const;
  PolyExpr scaled(double s) const;
  /// Removes exact zeros.
  PolyExpr& normalize();
  /// Coefficient of `m`, 0 when absent.
  double coef(const Monomial& m) const;
  std::size_t degree() const;
  double evaluate(const std::function<double(const Symbol&)>& value) const;

  bool operator==(const PolyExpr&) const = default;
};

/// Names used in reports: u, v, w (or s0, s1, ... beyond three channels),
/// u_x, u_y, u_z, lap_u.
std::string state_name(std::size_t channel, std::size_t n_channels);
std::string symbol_name(const Symbol& s, std::size_t n_channels);
/// "1", "u", "u*v^2", "u*u_x" ...
std::string monomial_name(const Monomial& m, std::size_t n_channels);

/// Residual of every state channel as a polynomial in the state, for models
/// whose parallel filters all act pointwise. Throws RoleError otherwise.
std::vector<PolyExpr> expand_pointwise(const ModelParams& params, const ModelConfig& config);
/// As expand_pointwise, but frozen stencil channels become derivative
/// symbols. Free filters must still be pointwise.
std::vector<PolyExpr> expand_with_derivatives(const ModelParams& params,
                                              const ModelConfig& config);

/// Drops terms with |coefficient| < threshold.
PolyExpr prune(const PolyExpr& expr, double threshold);
std::vector<PolyExpr> prune(const std::vector<PolyExpr>& exprs, double threshold);

/// Max |network residual - expression| over random states. Without frozen
/// stencils every symbol is sampled uniformly in [-1, 1] (at least
/// `n_samples` cells); with them, smooth random periodic fields are pushed
/// through the finite-difference operators.
double verify_extraction(const std::vector<PolyExpr>& exprs, const ModelParams& params,
                         const ModelConfig& config, std::size_t n_samples, std::uint64_t seed);

/// One line per channel, terms by decreasing |coefficient|, 4 significant
/// digits.
std::string format_report(const std::vector<PolyExpr>& exprs);
/// `channel,monomial,coefficient` rows in report order.
void write_terms_csv(std::ostream& os, const std::vector<PolyExpr>& exprs);

}  // namespace percnn
