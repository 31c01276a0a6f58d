#ifndef DCOT_ORACLES_HPP
#define DCOT_ORACLES_HPP

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "rational.hpp"

namespace dcot {

/*
 * Exact determinant by Bareiss fraction-free elimination. Every division
 * by the previous pivot is exact, so intermediate entries stay as small
 * as the minors they represent.
 */
inline Rational det(const RMatrix& a)
{
    if (!a.square())
        throw ShapeError("det: matrix is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
    const std::size_t n = a.rows();
    if (n == 0)
        return 1;
    RMatrix m = a;
    Rational prev = 1;
    int sign = 1;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        if (m(k, k) == 0) {
            std::size_t p = k + 1;
            while (p < n && m(p, k) == 0)
                ++p;
            if (p == n)
                return 0;
            m.swap_rows(k, p);
            sign = -sign;
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            for (std::size_t j = k + 1; j < n; ++j)
                m(i, j) = (m(i, j) * m(k, k) - m(i, k) * m(k, j)) / prev;
            m(i, k) = 0;
        }
        prev = m(k, k);
    }
    return sign * m(n - 1, n - 1);
}

struct RowEchelon {
    RMatrix reduced;
    std::vector<std::size_t> pivot_cols;
};

/// Reduced row echelon form over the first `coefficient_cols` columns (default: all).
inline RowEchelon rref(RMatrix m, std::optional<std::size_t> coefficient_cols = std::nullopt)
{
    const std::size_t limit = coefficient_cols.value_or(m.cols());
    RowEchelon out;
    std::size_t row = 0;
    for (std::size_t col = 0; col < limit && row < m.rows(); ++col) {
        std::size_t p = row;
        while (p < m.rows() && m(p, col) == 0)
            ++p;
        if (p == m.rows())
            continue;
        m.swap_rows(row, p);
        const Rational pivot = m(row, col);
        for (std::size_t j = 0; j < m.cols(); ++j)
            m(row, j) /= pivot;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            if (i == row || m(i, col) == 0)
                continue;
            const Rational f = m(i, col);
            for (std::size_t j = 0; j < m.cols(); ++j)
                m(i, j) -= f * m(row, j);
        }
        out.pivot_cols.push_back(col);
        ++row;
    }
    out.reduced = std::move(m);
    return out;
}

inline std::size_t rank(const RMatrix& a) { return rref(a).pivot_cols.size(); }

inline RMatrix inverse(const RMatrix& a)
{
    if (!a.square())
        throw ShapeError("inverse of a non-square matrix");
    const std::size_t n = a.rows();
    RMatrix aug(n, 2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            aug(i, j) = a(i, j);
        aug(i, n + i) = 1;
    }
    const RowEchelon e = rref(aug, n);
    if (e.pivot_cols.size() != n)
        throw DomainError("inverse: matrix is singular");
    RMatrix inv(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            inv(i, j) = e.reduced(i, n + j);
    return inv;
}

struct TraceIdentity {
    Rational trace_axxt;  // trace(A x x^T)
    Rational trace_xxta;  // trace(x x^T A)
    Rational quadratic;   // x^T A x, evaluated as x^T (A x)
    Rational two_pass;    // (A^T x) . x
    bool equal = false;
    Rational value;
};

/// trace(A x x^T) = trace(x x^T A) = x^T A x, each computed independently.
inline TraceIdentity trace_identity_check(const RMatrix& a, const RVector& x)
{
    if (!a.square() || a.rows() != x.size())
        throw ShapeError("trace_identity_check: A must be n x n with n = len(x)");
    TraceIdentity r;
    const RMatrix xxt = outer(x, x);
    r.trace_axxt = trace(a * xxt);
    r.trace_xxta = trace(xxt * a);
    r.quadratic = dot(x, a * x);
    r.two_pass = dot(a.transpose() * x, x);
    r.equal = r.trace_axxt == r.trace_xxta && r.trace_xxta == r.quadratic && r.quadratic == r.two_pass;
    r.value = r.quadratic;
    return r;
}

struct CombinationSolution {
    bool consistent = false;
    RVector particular;            // free parameters set to zero
    std::vector<RVector> nullspace; // one basis vector per free coefficient
};

/// All coefficient vectors c with sum_i c_i a_i = target.
inline CombinationSolution solve_combination(const std::vector<RVector>& vectors, const RVector& target)
{
    if (vectors.empty())
        throw ShapeError("solve_combination: no vectors");
    const std::size_t m = target.size();
    const std::size_t n = vectors.size();
    RMatrix aug(m, n + 1);
    for (std::size_t j = 0; j < n; ++j) {
        if (vectors[j].size() != m)
            throw ShapeError("solve_combination: vector " + std::to_string(j) + " has the wrong length");
        for (std::size_t i = 0; i < m; ++i)
            aug(i, j) = vectors[j][i];
    }
    for (std::size_t i = 0; i < m; ++i)
        aug(i, n) = target[i];
    const RowEchelon e = rref(aug, n);

    CombinationSolution sol;
    for (std::size_t i = e.pivot_cols.size(); i < m; ++i)
        if (e.reduced(i, n) != 0)
            return sol;
    sol.consistent = true;
    sol.particular.assign(n, Rational(0));
    for (std::size_t r = 0; r < e.pivot_cols.size(); ++r)
        sol.particular[e.pivot_cols[r]] = e.reduced(r, n);
    std::vector<bool> pivot(n, false);
    for (std::size_t c : e.pivot_cols)
        pivot[c] = true;
    for (std::size_t f = 0; f < n; ++f) {
        if (pivot[f])
            continue;
        RVector v(n, Rational(0));
        v[f] = 1;
        for (std::size_t r = 0; r < e.pivot_cols.size(); ++r)
            v[e.pivot_cols[r]] = -e.reduced(r, f);
        sol.nullspace.push_back(std::move(v));
    }
    return sol;
}

/// "(p1,...,pn)+s1*(v1...)+s2*(...)", or "inconsistent".
inline std::string format_combination(const CombinationSolution& sol)
{
    if (!sol.consistent)
        return "inconsistent";
    std::string out = format_vector(sol.particular);
    for (std::size_t k = 0; k < sol.nullspace.size(); ++k)
        out += "+s" + std::to_string(k + 1) + "*" + format_vector(sol.nullspace[k]);
    return out;
}

// ------------------------------------------------------------ expressions

namespace detail {

class ArithParser {
public:
    explicit ArithParser(std::string_view s) : s_(s) {}

    Rational parse()
    {
        Rational v = expr();
        skip();
        if (pos_ != s_.size())
            fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return v;
    }

private:
    [[noreturn]] void fail(const std::string& why) const
    {
        throw ParseError("arithmetic expression '" + std::string(s_) + "': " + why);
    }
    void skip()
    {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
            ++pos_;
    }
    bool eat(char c)
    {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    Rational expr()
    {
        Rational v = term();
        for (;;) {
            if (eat('+'))
                v += term();
            else if (eat('-'))
                v -= term();
            else
                return v;
        }
    }
    Rational term()
    {
        Rational v = unary();
        for (;;) {
            if (eat('*')) {
                v *= unary();
            } else if (eat('/')) {
                Rational d = unary();
                if (d == 0)
                    throw DomainError("division by zero in '" + std::string(s_) + "'");
                v /= d;
            } else {
                return v;
            }
        }
    }
    Rational unary()
    {
        if (eat('-'))
            return -unary();
        if (eat('+'))
            return unary();
        return power();
    }
    Rational power()
    {
        Rational base = primary();
        if (!eat('^'))
            return base;
        Rational e = unary();
        if (denominator(e) != 1)
            fail("non-integer exponent");
        long long k = static_cast<long long>(numerator(e));
        if (k < -64 || k > 64)
            fail("exponent out of range");
        if (k < 0 && base == 0)
            throw DomainError("zero to a negative power");
        Rational r = 1;
        for (long long i = 0; i < (k < 0 ? -k : k); ++i)
            r *= base;
        return k < 0 ? Rational(1) / r : r;
    }
    Rational primary()
    {
        if (eat('(')) {
            Rational v = expr();
            if (!eat(')'))
                fail("missing ')'");
            return v;
        }
        skip();
        std::size_t start = pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_])))
            ++pos_;
        if (pos_ == start)
            fail("expected a number");
        BigInt num(std::string(s_.substr(start, pos_ - start)));
        BigInt den = 1;
        if (pos_ < s_.size() && s_[pos_] == '.') {
            ++pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                num = num * 10 + (s_[pos_] - '0');
                den *= 10;
                ++pos_;
            }
        }
        return Rational(num, den);
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

} // namespace detail

/// Exact value of + - * / ^ expressions over integers and decimals.
inline Rational evaluate_arithmetic(std::string_view expr) { return detail::ArithParser(expr).parse(); }

struct MatrixFactor {
    RMatrix matrix;
    bool inverted = false;
};

/// "M1*inv(M2)*..." where each Mi is a matrix literal.
inline std::vector<MatrixFactor> parse_matrix_product(std::string_view s)
{
    std::vector<MatrixFactor> out;
    detail::LiteralCursor cur{s};
    do {
        cur.skip();
        MatrixFactor f;
        if (cur.s.substr(cur.pos, 4) == "inv(") {
            cur.pos += 4;
            f.matrix = detail::parse_matrix_at(cur);
            cur.expect(')');
            f.inverted = true;
        } else {
            f.matrix = detail::parse_matrix_at(cur);
        }
        out.push_back(std::move(f));
    } while (cur.eat('*'));
    if (!cur.at_end())
        throw ParseError("trailing characters in matrix product '" + std::string(s) + "'");
    return out;
}

inline RMatrix evaluate_product(const std::vector<MatrixFactor>& factors)
{
    if (factors.empty())
        throw ShapeError("empty matrix product");
    RMatrix acc = factors.front().inverted ? inverse(factors.front().matrix) : factors.front().matrix;
    for (std::size_t i = 1; i < factors.size(); ++i)
        acc = acc * (factors[i].inverted ? inverse(factors[i].matrix) : factors[i].matrix);
    return acc;
}

} // namespace dcot

#endif
