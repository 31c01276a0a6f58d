#ifndef DCOT_RATIONAL_HPP
#define DCOT_RATIONAL_HPP

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace dcot {

/// Exact rational; always reduced with a positive denominator.
using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline std::string to_string(const Rational& r) { return r.str(); }

/// Dense matrix of exact rationals.
class RMatrix {
public:
    RMatrix() = default;
    RMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, Rational(0)) {}

    static RMatrix identity(std::size_t n)
    {
        RMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = 1;
        return m;
    }

    static RMatrix from_rows(const std::vector<std::vector<Rational>>& rows)
    {
        if (rows.empty())
            return {};
        RMatrix m(rows.size(), rows.front().size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != m.cols_)
                throw ShapeError("ragged matrix literal");
            for (std::size_t c = 0; c < m.cols_; ++c)
                m(r, c) = rows[r][c];
        }
        return m;
    }

    /// Column matrix from a list of column vectors.
    static RMatrix from_columns(const std::vector<std::vector<Rational>>& cols)
    {
        if (cols.empty())
            return {};
        RMatrix m(cols.front().size(), cols.size());
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (cols[c].size() != m.rows_)
                throw ShapeError("columns differ in length");
            for (std::size_t r = 0; r < m.rows_; ++r)
                m(r, c) = cols[c][r];
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool square() const noexcept { return rows_ == cols_; }

    Rational& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const Rational& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    RMatrix transpose() const
    {
        RMatrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c)
                t(c, r) = (*this)(r, c);
        return t;
    }

    void swap_rows(std::size_t a, std::size_t b)
    {
        for (std::size_t c = 0; c < cols_; ++c)
            std::swap((*this)(a, c), (*this)(b, c));
    }

    bool operator==(const RMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Rational> data_;
};

inline RMatrix operator*(const RMatrix& a, const RMatrix& b)
{
    if (a.cols() != b.rows())
        throw ShapeError("matrix product: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * "
                         + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    RMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            if (a(i, k) == 0)
                continue;
            for (std::size_t j = 0; j < b.cols(); ++j)
                c(i, j) += a(i, k) * b(k, j);
        }
    return c;
}

using RVector = std::vector<Rational>;

inline RVector operator*(const RMatrix& a, const RVector& x)
{
    if (a.cols() != x.size())
        throw ShapeError("matrix-vector product: dimension mismatch");
    RVector y(a.rows(), Rational(0));
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            y[i] += a(i, j) * x[j];
    return y;
}

inline Rational dot(const RVector& a, const RVector& b)
{
    if (a.size() != b.size())
        throw ShapeError("dot: dimension mismatch");
    Rational s = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

/// x * y^T
inline RMatrix outer(const RVector& x, const RVector& y)
{
    RMatrix m(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j)
            m(i, j) = x[i] * y[j];
    return m;
}

inline Rational trace(const RMatrix& a)
{
    if (!a.square())
        throw ShapeError("trace of a non-square matrix");
    Rational s = 0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        s += a(i, i);
    return s;
}

// ---------------------------------------------------------------- literals

namespace detail {

struct LiteralCursor {
    std::string_view s;
    std::size_t pos = 0;

    void skip()
    {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
            ++pos;
    }
    bool eat(char c)
    {
        skip();
        if (pos < s.size() && s[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    void expect(char c)
    {
        if (!eat(c))
            throw ParseError(std::string("expected '") + c + "' at offset " + std::to_string(pos) + " in '"
                             + std::string(s) + "'");
    }
    bool at_end()
    {
        skip();
        return pos >= s.size();
    }
};

inline Rational parse_rational_at(LiteralCursor& cur)
{
    cur.skip();
    std::size_t start = cur.pos;
    if (cur.pos < cur.s.size() && (cur.s[cur.pos] == '-' || cur.s[cur.pos] == '+'))
        ++cur.pos;
    std::size_t digits = cur.pos;
    while (cur.pos < cur.s.size() && std::isdigit(static_cast<unsigned char>(cur.s[cur.pos])))
        ++cur.pos;
    if (cur.pos == digits)
        throw ParseError("expected a rational literal at offset " + std::to_string(start) + " in '"
                         + std::string(cur.s) + "'");
    BigInt num(std::string(cur.s.substr(start, cur.pos - start)));
    BigInt den = 1;
    if (cur.pos < cur.s.size() && cur.s[cur.pos] == '/') {
        ++cur.pos;
        std::size_t d0 = cur.pos;
        while (cur.pos < cur.s.size() && std::isdigit(static_cast<unsigned char>(cur.s[cur.pos])))
            ++cur.pos;
        if (cur.pos == d0)
            throw ParseError("missing denominator in '" + std::string(cur.s) + "'");
        den = BigInt(std::string(cur.s.substr(d0, cur.pos - d0)));
        if (den == 0)
            throw ParseError("zero denominator in '" + std::string(cur.s) + "'");
    }
    return Rational(num, den);
}

inline RVector parse_vector_at(LiteralCursor& cur)
{
    RVector v;
    cur.expect('[');
    if (cur.eat(']'))
        return v;
    do {
        v.push_back(parse_rational_at(cur));
    } while (cur.eat(','));
    cur.expect(']');
    return v;
}

inline RMatrix parse_matrix_at(LiteralCursor& cur)
{
    std::vector<RVector> rows;
    cur.expect('[');
    do {
        rows.push_back(parse_vector_at(cur));
    } while (cur.eat(','));
    cur.expect(']');
    return RMatrix::from_rows(rows);
}

} // namespace detail

/// "p/q", "p" or "-p/q".
inline Rational parse_rational(std::string_view s)
{
    detail::LiteralCursor cur{s};
    Rational r = detail::parse_rational_at(cur);
    if (!cur.at_end())
        throw ParseError("trailing characters in rational '" + std::string(s) + "'");
    return r;
}

/// "[a,b,c]"
inline RVector parse_vector(std::string_view s)
{
    detail::LiteralCursor cur{s};
    RVector v = detail::parse_vector_at(cur);
    if (!cur.at_end())
        throw ParseError("trailing characters in vector '" + std::string(s) + "'");
    return v;
}

/// "[[a,b],[c,d]]" (row-major)
inline RMatrix parse_matrix(std::string_view s)
{
    detail::LiteralCursor cur{s};
    RMatrix m = detail::parse_matrix_at(cur);
    if (!cur.at_end())
        throw ParseError("trailing characters in matrix '" + std::string(s) + "'");
    return m;
}

inline std::string format_vector(const RVector& v)
{
    std::string out = "(";
    for (std::size_t i = 0; i < v.size(); ++i)
        out += (i ? "," : "") + to_string(v[i]);
    return out + ")";
}

inline std::string format_matrix(const RMatrix& m)
{
    std::string out = "[";
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out += r ? ",[" : "[";
        for (std::size_t c = 0; c < m.cols(); ++c)
            out += (c ? "," : "") + to_string(m(r, c));
        out += "]";
    }
    return out + "]";
}

/// Entries p/q with |p| <= max_abs and 1 <= q <= max_den, from the seeded stream.
inline Rational random_rational(SplitMix64& rng, int max_abs = 9, int max_den = 4)
{
    const long long p = static_cast<long long>(rng.below(2 * static_cast<std::uint64_t>(max_abs) + 1)) - max_abs;
    const long long q = 1 + static_cast<long long>(rng.below(static_cast<std::uint64_t>(max_den)));
    return Rational(BigInt(p), BigInt(q));
}

inline RMatrix random_matrix(SplitMix64& rng, std::size_t rows, std::size_t cols, int max_abs = 9, int max_den = 4)
{
    RMatrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            m(r, c) = random_rational(rng, max_abs, max_den);
    return m;
}

inline RVector random_vector(SplitMix64& rng, std::size_t n, int max_abs = 9, int max_den = 4)
{
    RVector v(n);
    for (auto& x : v)
        x = random_rational(rng, max_abs, max_den);
    return v;
}

} // namespace dcot

#endif
