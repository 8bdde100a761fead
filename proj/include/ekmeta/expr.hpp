#pragma once

#include "common.hpp"

#include <cctype>
#include <charconv>
#include <memory>
#include <sstream>

namespace ekm {

enum class Op { Num, Var, Neg, Add, Sub, Mul, Div, PowInt, PowReal, Exp, Log, Sin, Cos, Sqrt };

struct Node {
    Op op;
    double num = 0.0;  // literal value
    int var = 0;       // 0-based variable index
    long ipow = 0;     // exponent for PowInt
    int a = -1, b = -1;
};

// Nodes are stored in post-order: children always precede their parent.
struct Expr {
    std::vector<Node> nodes;
    int root() const { return static_cast<int>(nodes.size()) - 1; }
};

// Value, gradient and packed upper-triangular Hessian.
struct Jet2 {
    double value = 0.0;
    Vec gradient;
    Mat hessian;
};

inline std::size_t tri_index(std::size_t i, std::size_t j, std::size_t n) {
    if (i > j) std::swap(i, j);
    return i * n - i * (i + 1) / 2 + j;
}

class Potential;
Potential parse_potential(const std::string& source, int dim, std::string name = {});

class Potential {
public:
    Potential() = default;
    Potential(std::shared_ptr<const Expr> e, int dim, std::string name)
        : expr_(std::move(e)), dim_(dim), name_(std::move(name)) {}

    int dim() const { return dim_; }
    const std::string& name() const { return name_; }
    const Expr& expr() const { return *expr_; }

    double value(const Vec& x) const {
        check_point(x);
        thread_local std::vector<double> s;
        const auto& nodes = expr_->nodes;
        s.resize(nodes.size());
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            const Node& nd = nodes[k];
            double va = nd.a >= 0 ? s[static_cast<std::size_t>(nd.a)] : 0.0;
            double vb = nd.b >= 0 ? s[static_cast<std::size_t>(nd.b)] : 0.0;
            double r = 0.0;
            switch (nd.op) {
                case Op::Num: r = nd.num; break;
                case Op::Var: r = x[nd.var]; break;
                case Op::Neg: r = -va; break;
                case Op::Add: r = va + vb; break;
                case Op::Sub: r = va - vb; break;
                case Op::Mul: r = va * vb; break;
                case Op::Div: r = va / vb; break;
                case Op::PowInt: r = ipow(va, nd.ipow); break;
                case Op::PowReal:
                    if (!(va > 0.0)) throw Error("DomainError", "real power of non-positive base");
                    r = std::exp(vb * std::log(va));
                    break;
                case Op::Exp: r = std::exp(va); break;
                case Op::Log:
                    if (!(va > 0.0)) throw Error("DomainError", "log of non-positive argument");
                    r = std::log(va);
                    break;
                case Op::Sin: r = std::sin(va); break;
                case Op::Cos: r = std::cos(va); break;
                case Op::Sqrt:
                    if (!(va > 0.0)) throw Error("DomainError", "sqrt of non-positive argument");
                    r = std::sqrt(va);
                    break;
            }
            s[k] = r;
        }
        double v = s.back();
        if (!std::isfinite(v)) throw Error("NonFinite", "potential evaluated to a non-finite value");
        return v;
    }

    Jet2 jet(const Vec& x) const {
        check_point(x);
        const std::size_t n = static_cast<std::size_t>(dim_), nt = n * (n + 1) / 2, stride = 1 + n + nt;
        const auto& nodes = expr_->nodes;
        thread_local std::vector<double> buf;
        buf.assign(nodes.size() * stride, 0.0);
        auto at = [&](int k) { return buf.data() + static_cast<std::size_t>(k) * stride; };

        // r = f(a) with f', f'' given
        auto chain = [&](double* r, const double* a, double f0, double f1, double f2) {
            r[0] = f0;
            for (std::size_t i = 0; i < n; ++i) r[1 + i] = f1 * a[1 + i];
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i; j < n; ++j) {
                    std::size_t t = 1 + n + tri_index(i, j, n);
                    r[t] = f1 * a[t] + f2 * a[1 + i] * a[1 + j];
                }
        };
        auto mul = [&](double* r, const double* a, const double* b) {
            r[0] = a[0] * b[0];
            for (std::size_t i = 0; i < n; ++i) r[1 + i] = a[0] * b[1 + i] + b[0] * a[1 + i];
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i; j < n; ++j) {
                    std::size_t t = 1 + n + tri_index(i, j, n);
                    r[t] = a[0] * b[t] + b[0] * a[t] + a[1 + i] * b[1 + j] + a[1 + j] * b[1 + i];
                }
        };
        std::vector<double> tmp(stride), acc(stride);

        for (std::size_t k = 0; k < nodes.size(); ++k) {
            const Node& nd = nodes[k];
            double* r = at(static_cast<int>(k));
            const double* a = nd.a >= 0 ? at(nd.a) : nullptr;
            const double* b = nd.b >= 0 ? at(nd.b) : nullptr;
            switch (nd.op) {
                case Op::Num: r[0] = nd.num; break;
                case Op::Var:
                    r[0] = x[nd.var];
                    r[1 + static_cast<std::size_t>(nd.var)] = 1.0;
                    break;
                case Op::Neg:
                    for (std::size_t t = 0; t < stride; ++t) r[t] = -a[t];
                    break;
                case Op::Add:
                    for (std::size_t t = 0; t < stride; ++t) r[t] = a[t] + b[t];
                    break;
                case Op::Sub:
                    for (std::size_t t = 0; t < stride; ++t) r[t] = a[t] - b[t];
                    break;
                case Op::Mul: mul(r, a, b); break;
                case Op::Div: {
                    double v = b[0];
                    if (v == 0.0) throw Error("NonFinite", "division by zero");
                    chain(tmp.data(), b, 1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v));
                    mul(r, a, tmp.data());
                    break;
                }
                case Op::PowInt: {
                    long e = nd.ipow;
                    long m = e < 0 ? -e : e;
                    std::fill(acc.begin(), acc.end(), 0.0);
                    acc[0] = 1.0;
                    for (long q = 0; q < m; ++q) {
                        mul(tmp.data(), acc.data(), a);
                        acc.swap(tmp);
                    }
                    if (e < 0) {
                        double v = acc[0];
                        if (v == 0.0) throw Error("NonFinite", "negative power of zero");
                        chain(r, acc.data(), 1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v));
                    } else {
                        std::copy(acc.begin(), acc.end(), r);
                    }
                    break;
                }
                case Op::PowReal: {
                    if (!(a[0] > 0.0)) throw Error("DomainError", "real power of non-positive base");
                    double la = std::log(a[0]);
                    chain(tmp.data(), a, la, 1.0 / a[0], -1.0 / (a[0] * a[0]));
                    mul(acc.data(), b, tmp.data());
                    double ev = std::exp(acc[0]);
                    chain(r, acc.data(), ev, ev, ev);
                    break;
                }
                case Op::Exp: {
                    double ev = std::exp(a[0]);
                    chain(r, a, ev, ev, ev);
                    break;
                }
                case Op::Log:
                    if (!(a[0] > 0.0)) throw Error("DomainError", "log of non-positive argument");
                    chain(r, a, std::log(a[0]), 1.0 / a[0], -1.0 / (a[0] * a[0]));
                    break;
                case Op::Sin: chain(r, a, std::sin(a[0]), std::cos(a[0]), -std::sin(a[0])); break;
                case Op::Cos: chain(r, a, std::cos(a[0]), -std::sin(a[0]), -std::cos(a[0])); break;
                case Op::Sqrt: {
                    if (!(a[0] > 0.0)) throw Error("DomainError", "sqrt of non-positive argument");
                    double sv = std::sqrt(a[0]);
                    chain(r, a, sv, 0.5 / sv, -0.25 / (sv * a[0]));
                    break;
                }
            }
        }
        const double* r = at(expr_->root());
        Jet2 j;
        j.value = r[0];
        j.gradient.resize(dim_);
        j.hessian.resize(dim_, dim_);
        for (std::size_t i = 0; i < n; ++i) {
            j.gradient[static_cast<Eigen::Index>(i)] = r[1 + i];
            for (std::size_t q = i; q < n; ++q) {
                double h = r[1 + n + tri_index(i, q, n)];
                j.hessian(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = h;
                j.hessian(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(i)) = h;
            }
        }
        if (!std::isfinite(j.value) || !j.gradient.allFinite() || !j.hessian.allFinite())
            throw Error("NonFinite", "potential derivatives are not finite");
        return j;
    }

    Vec gradient(const Vec& x) const { return jet(x).gradient; }

    std::string to_string() const { return print(expr_->root()); }

private:
    std::shared_ptr<const Expr> expr_;
    int dim_ = 0;
    std::string name_;

    void check_point(const Vec& x) const {
        if (x.size() != dim_) throw Error("DimensionMismatch", "point has wrong dimension");
        if (!x.allFinite()) throw Error("NonFinite", "point is not finite");
    }

    static double ipow(double v, long e) {
        long m = e < 0 ? -e : e;
        double r = 1.0;
        for (long q = 0; q < m; ++q) r *= v;
        return e < 0 ? 1.0 / r : r;
    }

    static std::string fmt(double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    }

    std::string print(int k) const {
        const Node& nd = expr_->nodes[static_cast<std::size_t>(k)];
        auto p = [&](int c) { return "(" + print(c) + ")"; };
        switch (nd.op) {
            case Op::Num: return nd.num < 0 ? "(" + fmt(nd.num) + ")" : fmt(nd.num);
            case Op::Var: return "x" + std::to_string(nd.var + 1);
            case Op::Neg: return "-" + p(nd.a);
            case Op::Add: return p(nd.a) + "+" + p(nd.b);
            case Op::Sub: return p(nd.a) + "-" + p(nd.b);
            case Op::Mul: return p(nd.a) + "*" + p(nd.b);
            case Op::Div: return p(nd.a) + "/" + p(nd.b);
            case Op::PowInt: return p(nd.a) + "^" + (nd.ipow < 0 ? "(" + std::to_string(nd.ipow) + ")" : std::to_string(nd.ipow));
            case Op::PowReal: return p(nd.a) + "^" + p(nd.b);
            case Op::Exp: return "exp" + p(nd.a);
            case Op::Log: return "log" + p(nd.a);
            case Op::Sin: return "sin" + p(nd.a);
            case Op::Cos: return "cos" + p(nd.a);
            case Op::Sqrt: return "sqrt" + p(nd.a);
        }
        return {};
    }
};

namespace detail {

class Parser {
public:
    Parser(const std::string& src, int dim) : s_(src), dim_(dim) {}

    std::shared_ptr<const Expr> run() {
        auto e = std::make_shared<Expr>();
        e_ = e.get();
        skip();
        if (pos_ >= s_.size()) fail("number, identifier, '(' or '-'");
        expr();
        skip();
        if (pos_ < s_.size()) fail("operator or end of input");
        return e;
    }

private:
    const std::string& s_;
    int dim_;
    std::size_t pos_ = 0;
    Expr* e_ = nullptr;

    [[noreturn]] void fail(const std::string& expected) const {
        std::string where = pos_ >= s_.size() ? "end of input" : "position " + std::to_string(pos_);
        throw Error("SyntaxError", "at " + where + ", expected " + expected);
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    int push(Node n) {
        e_->nodes.push_back(n);
        return static_cast<int>(e_->nodes.size()) - 1;
    }
    int bin(Op op, int a, int b) { return push(Node{op, 0.0, 0, 0, a, b}); }

    int expr() {
        int a = term();
        for (;;) {
            if (eat('+')) a = bin(Op::Add, a, term());
            else if (eat('-')) a = bin(Op::Sub, a, term());
            else return a;
        }
    }
    int term() {
        int a = factor();
        for (;;) {
            if (eat('*')) a = bin(Op::Mul, a, factor());
            else if (eat('/')) a = bin(Op::Div, a, factor());
            else return a;
        }
    }
    int factor() { return unary(); }
    int unary() {
        if (eat('-')) {
            int a = unary();
            return push(Node{Op::Neg, 0.0, 0, 0, a, -1});
        }
        return power();
    }
    // '^' binds tighter than unary minus and is right-associative
    int power() {
        int a = atom();
        if (!eat('^')) return a;
        int b = unary();
        const Node& nb = e_->nodes[static_cast<std::size_t>(b)];
        double lit = 0.0;
        bool is_lit = false;
        if (nb.op == Op::Num) {
            lit = nb.num;
            is_lit = true;
        } else if (nb.op == Op::Neg && e_->nodes[static_cast<std::size_t>(nb.a)].op == Op::Num) {
            lit = -e_->nodes[static_cast<std::size_t>(nb.a)].num;
            is_lit = true;
        }
        if (is_lit && lit == std::floor(lit) && std::abs(lit) <= 64)
            return push(Node{Op::PowInt, 0.0, 0, static_cast<long>(lit), a, -1});
        return bin(Op::PowReal, a, b);
    }
    int atom() {
        skip();
        if (pos_ >= s_.size()) fail("number, identifier, '(' or '-'");
        char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
            if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
                std::size_t save = pos_++;
                if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
                if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
                } else {
                    pos_ = save;
                }
            }
            double v = 0.0;
            auto res = std::from_chars(s_.data() + start, s_.data() + pos_, v);
            if (res.ec != std::errc() || res.ptr != s_.data() + pos_) {
                pos_ = start;
                fail("number");
            }
            return push(Node{Op::Num, v, 0, 0, -1, -1});
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            std::string id = s_.substr(start, pos_ - start);
            if (id == "pi") return push(Node{Op::Num, pi, 0, 0, -1, -1});
            Op fop;
            if (id == "exp") fop = Op::Exp;
            else if (id == "log") fop = Op::Log;
            else if (id == "sin") fop = Op::Sin;
            else if (id == "cos") fop = Op::Cos;
            else if (id == "sqrt") fop = Op::Sqrt;
            else if (id.size() >= 2 && id[0] == 'x' && id.find_first_not_of("0123456789", 1) == std::string::npos &&
                     id[1] != '0') {
                int k = std::stoi(id.substr(1));
                if (k < 1 || k > 16) throw Error("UnknownIdentifier", id);
                if (k > dim_)
                    throw Error("DimensionMismatch", id + " exceeds declared dimension " + std::to_string(dim_));
                return push(Node{Op::Var, 0.0, k - 1, 0, -1, -1});
            } else {
                throw Error("UnknownIdentifier", id);
            }
            if (!eat('(')) fail("'(' after " + id);
            int a = expr();
            if (!eat(')')) fail("')'");
            return push(Node{fop, 0.0, 0, 0, a, -1});
        }
        if (eat('(')) {
            int a = expr();
            if (!eat(')')) fail("')'");
            return a;
        }
        fail("number, identifier, '(' or '-'");
    }
};

}  // namespace detail

inline Potential parse_potential(const std::string& source, int dim, std::string name) {
    if (dim < 1 || dim > 16) throw Error("DimensionMismatch", "dimension must be in 1..16");
    bool blank = source.find_first_not_of(" \t\r\n") == std::string::npos;
    if (blank) throw Error("SyntaxError", "at end of input, expected expression");
    detail::Parser p(source, dim);
    return Potential(p.run(), dim, name.empty() ? source : std::move(name));
}

inline Jet2 eval_jet2(const Potential& p, const Vec& x) { return p.jet(x); }

inline Vec vec1(double a) {
    Vec v(1);
    v << a;
    return v;
}
inline Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

}  // namespace ekm
