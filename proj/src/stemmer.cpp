#include "zsl/stemmer.hpp"

#include "detail/utf8.hpp"

#include <algorithm>
#include <array>
#include <initializer_list>

namespace zsl {

namespace {

bool in_v(char32_t c) {
    switch (c) {
    case U'a': case U'e': case U'i': case U'o': case U'u': case U'y': case U'è':
        return true;
    default:
        return false;
    }
}

bool in_v_I(char32_t c) { return c == U'I' || in_v(c); }
bool in_v_j(char32_t c) { return c == U'j' || in_v(c); }

/// Cursor machine mirroring the Snowball runtime: `limit_backward..limit` is
/// the active region, `bra..ket` the slice targeted by deletions.
class Machine {
public:
    explicit Machine(std::u32string w) : s_(std::move(w)), limit_(static_cast<int>(s_.size())) {}

    std::u32string take() && { return std::move(s_); }

    void run() {
        prelude();
        mark_regions();
        limit_backward_ = 0;
        cursor_ = limit_;
        standard_suffix();
        postlude();
    }

private:
    std::u32string s_;
    int cursor_ = 0;
    int limit_ = 0;
    int limit_backward_ = 0;
    int bra_ = 0;
    int ket_ = 0;
    int p1_ = 0;
    int p2_ = 0;
    bool e_found_ = false;

    char32_t at(int i) const { return s_[static_cast<std::size_t>(i)]; }

    void slice_from(std::u32string_view v) {
        const int adjustment = static_cast<int>(v.size()) - (ket_ - bra_);
        s_.replace(static_cast<std::size_t>(bra_), static_cast<std::size_t>(ket_ - bra_), v);
        limit_ += adjustment;
        if (cursor_ >= ket_) {
            cursor_ += adjustment;
        } else if (cursor_ > bra_) {
            cursor_ = bra_;
        }
    }
    void slice_del() { slice_from(U""); }

    template <class G>
    bool go_out_grouping(G g) {
        while (cursor_ < limit_) {
            if (g(at(cursor_))) {
                return true;
            }
            ++cursor_;
        }
        return false;
    }

    template <class G>
    bool go_in_grouping(G g) {
        while (cursor_ < limit_) {
            if (!g(at(cursor_))) {
                return true;
            }
            ++cursor_;
        }
        return false;
    }

    template <class G>
    bool out_grouping_b(G g) {
        if (cursor_ <= limit_backward_ || g(at(cursor_ - 1))) {
            return false;
        }
        --cursor_;
        return true;
    }

    bool eq_s_b(std::u32string_view v) {
        const int n = static_cast<int>(v.size());
        if (cursor_ - limit_backward_ < n) {
            return false;
        }
        if (std::u32string_view(s_).substr(static_cast<std::size_t>(cursor_ - n),
                                           static_cast<std::size_t>(n)) != v) {
            return false;
        }
        cursor_ -= n;
        return true;
    }

    bool char_before_is(char32_t c) const { return cursor_ > limit_backward_ && at(cursor_ - 1) == c; }

    /// Longest suffix ending at the cursor; returns its 1-based position in
    /// `options` (0 when none matches) and moves the cursor to its start.
    int find_among_b(std::initializer_list<std::u32string_view> options) {
        int best = 0;
        std::size_t best_len = 0;
        int idx = 0;
        for (auto o : options) {
            ++idx;
            const int n = static_cast<int>(o.size());
            if (o.size() <= best_len || cursor_ - limit_backward_ < n) {
                continue;
            }
            if (std::u32string_view(s_).substr(static_cast<std::size_t>(cursor_ - n),
                                               static_cast<std::size_t>(n)) == o) {
                best = idx;
                best_len = o.size();
            }
        }
        cursor_ -= static_cast<int>(best_len);
        return best;
    }

    bool R1() const { return p1_ <= cursor_; }
    bool R2() const { return p2_ <= cursor_; }

    void prelude() {
        for (auto& c : s_) {
            switch (c) {
            case U'á': case U'ä': c = U'a'; break;
            case U'é': case U'ë': c = U'e'; break;
            case U'í': case U'ï': c = U'i'; break;
            case U'ó': case U'ö': c = U'o'; break;
            case U'ú': case U'ü': c = U'u'; break;
            default: break;
            }
        }
        if (!s_.empty() && s_[0] == U'y') {
            s_[0] = U'Y';
        }
        cursor_ = 0;
        while (true) {
            if (!go_out_grouping(in_v)) {
                break;
            }
            ++cursor_;
            if (cursor_ < limit_ && at(cursor_) == U'i') {
                ++cursor_;
                if (cursor_ < limit_ && in_v(at(cursor_))) {
                    s_[static_cast<std::size_t>(cursor_ - 1)] = U'I';
                }
            } else if (cursor_ < limit_ && at(cursor_) == U'y') {
                s_[static_cast<std::size_t>(cursor_)] = U'Y';
                ++cursor_;
            }
        }
        cursor_ = 0;
    }

    void mark_regions() {
        p1_ = limit_;
        p2_ = limit_;
        cursor_ = 0;
        if (cursor_ + 3 > limit_) {
            return;
        }
        const int x = cursor_ + 3;
        if (!go_out_grouping(in_v)) {
            return;
        }
        ++cursor_;
        if (!go_in_grouping(in_v)) {
            return;
        }
        ++cursor_;
        p1_ = std::max(cursor_, x);
        if (!go_out_grouping(in_v)) {
            return;
        }
        ++cursor_;
        if (!go_in_grouping(in_v)) {
            return;
        }
        ++cursor_;
        p2_ = cursor_;
    }

    void postlude() {
        for (auto& c : s_) {
            if (c == U'Y') {
                c = U'y';
            } else if (c == U'I') {
                c = U'i';
            }
        }
    }

    bool undouble() {
        const int v1 = limit_ - cursor_;
        if (find_among_b({U"dd", U"kk", U"tt"}) == 0) {
            return false;
        }
        cursor_ = limit_ - v1;
        ket_ = cursor_;
        if (cursor_ <= limit_backward_) {
            return false;
        }
        --cursor_;
        bra_ = cursor_;
        slice_del();
        return true;
    }

    bool e_ending() {
        e_found_ = false;
        ket_ = cursor_;
        if (!char_before_is(U'e')) {
            return false;
        }
        --cursor_;
        bra_ = cursor_;
        if (!R1()) {
            return false;
        }
        const int v1 = limit_ - cursor_;
        if (!out_grouping_b(in_v)) {
            return false;
        }
        cursor_ = limit_ - v1;
        slice_del();
        e_found_ = true;
        return undouble();
    }

    bool en_ending() {
        if (!R1()) {
            return false;
        }
        const int v1 = limit_ - cursor_;
        if (!out_grouping_b(in_v)) {
            return false;
        }
        cursor_ = limit_ - v1;
        if (eq_s_b(U"gem")) {
            return false;
        }
        slice_del();
        return undouble();
    }

    void standard_suffix() {
        const int v1 = limit_ - cursor_;
        ket_ = cursor_;
        switch (find_among_b({U"ene", U"se", U"en", U"heden", U"s"})) {
        case 4:
            bra_ = cursor_;
            if (R1()) {
                slice_from(U"heid");
            }
            break;
        case 1:
        case 3:
            bra_ = cursor_;
            en_ending();
            break;
        case 2:
        case 5:
            bra_ = cursor_;
            if (R1() && out_grouping_b(in_v_j)) {
                slice_del();
            }
            break;
        default:
            break;
        }
        cursor_ = limit_ - v1;

        const int v2 = limit_ - cursor_;
        e_ending();
        cursor_ = limit_ - v2;

        const int v3 = limit_ - cursor_;
        heid_ending();
        cursor_ = limit_ - v3;

        const int v4 = limit_ - cursor_;
        derivational_suffix();
        cursor_ = limit_ - v4;

        const int v6 = limit_ - cursor_;
        undouble_vowel();
        cursor_ = limit_ - v6;
    }

    void heid_ending() {
        ket_ = cursor_;
        if (!eq_s_b(U"heid")) {
            return;
        }
        bra_ = cursor_;
        if (!R2() || char_before_is(U'c')) {
            return;
        }
        slice_del();
        ket_ = cursor_;
        if (!eq_s_b(U"en")) {
            return;
        }
        bra_ = cursor_;
        en_ending();
    }

    void derivational_suffix() {
        ket_ = cursor_;
        const int among = find_among_b({U"end", U"ig", U"ing", U"lijk", U"baar", U"bar"});
        if (among == 0) {
            return;
        }
        bra_ = cursor_;
        switch (among) {
        case 1:
        case 3: {
            if (!R2()) {
                return;
            }
            slice_del();
            const int v5 = limit_ - cursor_;
            ket_ = cursor_;
            if (eq_s_b(U"ig")) {
                bra_ = cursor_;
                if (R2() && !char_before_is(U'e')) {
                    slice_del();
                    return;
                }
            }
            cursor_ = limit_ - v5;
            undouble();
            return;
        }
        case 2:
            if (R2() && !char_before_is(U'e')) {
                slice_del();
            }
            return;
        case 4:
            if (R2()) {
                slice_del();
                e_ending();
            }
            return;
        case 5:
            if (R2()) {
                slice_del();
            }
            return;
        case 6:
            if (R2() && e_found_) {
                slice_del();
            }
            return;
        default:
            return;
        }
    }

    void undouble_vowel() {
        if (!out_grouping_b(in_v_I)) {
            return;
        }
        const int v7 = limit_ - cursor_;
        if (find_among_b({U"aa", U"ee", U"oo", U"uu"}) == 0) {
            return;
        }
        if (!out_grouping_b(in_v)) {
            return;
        }
        cursor_ = limit_ - v7;
        ket_ = cursor_;
        if (cursor_ <= limit_backward_) {
            return;
        }
        --cursor_;
        bra_ = cursor_;
        slice_del();
    }
};

} // namespace

std::string stem(std::string_view word) {
    if (word.empty()) {
        return {};
    }
    Machine m(detail::utf8_decode(word));
    m.run();
    return detail::utf8_encode(std::move(m).take());
}

} // namespace zsl
