#include "flowlab/toml.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include <fmt/format.h>

#include "flowlab/common.hpp"

namespace flowlab {

namespace {

using nlohmann::json;

class Parser {
public:
    Parser(std::string_view text, std::string source) : text_(text), source_(std::move(source)) {}

    json parse() {
        json root = json::object();
        json* table = &root;
        while (true) {
            skip_blank_lines();
            if (eof()) break;
            if (peek() == '[') {
                ++pos_;
                if (peek() == '[') fail("arrays of tables are not supported");
                skip_spaces();
                const auto path = parse_key_path();
                skip_spaces();
                expect(']');
                table = &descend(root, path, true);
            } else {
                const auto path = parse_key_path();
                skip_spaces();
                expect('=');
                skip_spaces();
                json value = parse_value();
                assign(*table, path, std::move(value));
            }
            end_of_line();
        }
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(fmt::format("{}:{}: {}", source_, line_, what));
    }

    bool eof() const { return pos_ >= text_.size(); }
    char peek() const { return eof() ? '\0' : text_[pos_]; }

    void expect(char c) {
        if (peek() != c) fail(fmt::format("expected '{}'", c));
        ++pos_;
    }

    void skip_spaces() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
    }

    void skip_comment() {
        if (peek() == '#')
            while (!eof() && peek() != '\n') ++pos_;
    }

    void newline() {
        if (peek() == '\r') ++pos_;
        if (peek() == '\n') {
            ++pos_;
            ++line_;
        }
    }

    void skip_blank_lines() {
        while (!eof()) {
            skip_spaces();
            skip_comment();
            if (peek() == '\n' || peek() == '\r') {
                newline();
            } else {
                break;
            }
        }
    }

    // Whitespace, comments and newlines inside arrays.
    void skip_array_space() {
        while (!eof()) {
            skip_spaces();
            skip_comment();
            if (peek() == '\n' || peek() == '\r') {
                newline();
            } else {
                break;
            }
        }
    }

    void end_of_line() {
        skip_spaces();
        skip_comment();
        if (eof()) return;
        if (peek() != '\n' && peek() != '\r') fail("unexpected trailing characters");
        newline();
    }

    std::string parse_key() {
        if (peek() == '"') return parse_basic_string();
        if (peek() == '\'') return parse_literal_string();
        std::string key;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-'))
            key += text_[pos_++];
        if (key.empty()) fail("expected a key");
        return key;
    }

    std::vector<std::string> parse_key_path() {
        std::vector<std::string> path{parse_key()};
        skip_spaces();
        while (peek() == '.') {
            ++pos_;
            skip_spaces();
            path.push_back(parse_key());
            skip_spaces();
        }
        return path;
    }

    json& descend(json& root, const std::vector<std::string>& path, bool header) {
        json* node = &root;
        for (std::size_t i = 0; i < path.size(); ++i) {
            auto& child = (*node)[path[i]];
            if (child.is_null()) {
                child = json::object();
            } else if (!child.is_object()) {
                fail(fmt::format("key '{}' is not a table", path[i]));
            } else if (header && i + 1 == path.size() && defined_.count(&child)) {
                fail(fmt::format("table '{}' defined twice", path[i]));
            }
            node = &child;
        }
        if (header) defined_.insert(node);
        return *node;
    }

    void assign(json& table, const std::vector<std::string>& path, json value) {
        std::vector<std::string> parents(path.begin(), path.end() - 1);
        json& target = parents.empty() ? table : descend(table, parents, false);
        if (target.contains(path.back())) fail(fmt::format("duplicate key '{}'", path.back()));
        target[path.back()] = std::move(value);
    }

    std::string parse_basic_string() {
        expect('"');
        if (text_.substr(pos_, 2) == "\"\"") fail("multi-line strings are not supported");
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            const char c = text_[pos_++];
            if (c == '"') break;
            if (c != '\\') {
                out += c;
                continue;
            }
            const char e = text_[pos_++];
            switch (e) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: fail(fmt::format("unsupported escape '\\{}'", e));
            }
        }
        return out;
    }

    std::string parse_literal_string() {
        expect('\'');
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            const char c = text_[pos_++];
            if (c == '\'') break;
            out += c;
        }
        return out;
    }

    json parse_value() {
        const char c = peek();
        if (c == '"') return parse_basic_string();
        if (c == '\'') return parse_literal_string();
        if (c == '[') return parse_array();
        if (c == '{') return parse_inline_table();
        std::string token;
        while (!eof() && !std::isspace(static_cast<unsigned char>(peek())) && peek() != ',' && peek() != ']' &&
               peek() != '}' && peek() != '#')
            token += text_[pos_++];
        if (token.empty()) fail("expected a value");
        if (token == "true") return true;
        if (token == "false") return false;
        return parse_number(token);
    }

    json parse_number(std::string token) {
        std::string clean;
        for (std::size_t i = 0; i < token.size(); ++i) {
            if (token[i] == '_') {
                if (i == 0 || i + 1 == token.size() || !std::isdigit(static_cast<unsigned char>(token[i - 1])) ||
                    !std::isdigit(static_cast<unsigned char>(token[i + 1])))
                    fail(fmt::format("malformed number '{}'", token));
                continue;
            }
            clean += token[i];
        }
        std::string_view body = clean;
        double sign = 1.0;
        if (!body.empty() && (body[0] == '+' || body[0] == '-')) {
            sign = body[0] == '-' ? -1.0 : 1.0;
            body.remove_prefix(1);
        }
        if (body == "inf") return sign * std::numeric_limits<double>::infinity();
        if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
        const bool is_float = clean.find_first_of(".eE") != std::string::npos;
        const char* first = clean.data() + (clean[0] == '+' ? 1 : 0);
        const char* last = clean.data() + clean.size();
        if (!is_float) {
            std::int64_t v = 0;
            const auto [ptr, ec] = std::from_chars(first, last, v);
            if (ec != std::errc() || ptr != last) fail(fmt::format("malformed number '{}'", token));
            return v;
        }
        if (clean.find('.') != std::string::npos) {
            const auto dot = clean.find('.');
            if (dot == 0 || !std::isdigit(static_cast<unsigned char>(clean[dot - 1])) || dot + 1 >= clean.size() ||
                !std::isdigit(static_cast<unsigned char>(clean[dot + 1])))
                fail(fmt::format("malformed number '{}'", token));
        }
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last) fail(fmt::format("malformed number '{}'", token));
        return v;
    }

    json parse_array() {
        expect('[');
        json out = json::array();
        skip_array_space();
        while (peek() != ']') {
            out.push_back(parse_value());
            skip_array_space();
            if (peek() == ',') {
                ++pos_;
                skip_array_space();
            } else if (peek() != ']') {
                fail("expected ',' or ']' in array");
            }
        }
        ++pos_;
        return out;
    }

    json parse_inline_table() {
        expect('{');
        json out = json::object();
        skip_spaces();
        if (peek() == '}') {
            ++pos_;
            return out;
        }
        while (true) {
            skip_spaces();
            const auto path = parse_key_path();
            skip_spaces();
            expect('=');
            skip_spaces();
            assign(out, path, parse_value());
            skip_spaces();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            expect('}');
            return out;
        }
    }

    std::string_view text_;
    std::string source_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::set<const json*> defined_;
};

}  // namespace

json parse_toml(std::string_view text, const std::string& source) { return Parser(text, source).parse(); }

}  // namespace flowlab
