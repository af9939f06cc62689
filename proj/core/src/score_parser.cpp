#include "swarmchor/choreography.hpp"

#include <fmt/format.h>

#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace swarmchor {
namespace {

class LineCursor {
public:
    explicit LineCursor(std::string_view text) : text_(text) {}

    void skipSpace() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    bool atEnd() {
        skipSpace();
        return pos_ >= text_.size();
    }
    std::size_t column() const { return pos_ + 1; }

    bool consume(char c) {
        skipSpace();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    bool consume(std::string_view token) {
        skipSpace();
        if (text_.substr(pos_, token.size()) == token) {
            pos_ += token.size();
            return true;
        }
        return false;
    }

    std::optional<std::string> identifier() {
        skipSpace();
        const std::size_t start = pos_;
        if (pos_ < text_.size() && (std::isalpha(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
            ++pos_;
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
                ++pos_;
            }
            return std::string(text_.substr(start, pos_ - start));
        }
        return std::nullopt;
    }

    std::optional<double> number() {
        skipSpace();
        const char* begin = text_.data() + pos_;
        const char* end = text_.data() + text_.size();
        if (begin < end && *begin == '+') ++begin;  // from_chars rejects a leading '+'
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(begin, end, value);
        if (ec != std::errc() || !std::isfinite(value)) return std::nullopt;
        pos_ = static_cast<std::size_t>(ptr - text_.data());
        return value;
    }

    std::optional<int> integer() {
        skipSpace();
        int value = 0;
        const auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
        if (ec != std::errc()) return std::nullopt;
        // Reject "3.5" where an integer is expected.
        if (ptr < text_.data() + text_.size() && (*ptr == '.' || *ptr == 'e' || *ptr == 'E')) return std::nullopt;
        pos_ = static_cast<std::size_t>(ptr - text_.data());
        return value;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

struct LineError {
    std::size_t column;
    std::string message;
};

std::optional<LayoutDirective> parseLayout(LineCursor& cur, std::optional<LineError>& err) {
    const std::size_t col = cur.column();
    const auto kind = cur.identifier();
    LayoutDirective layout;
    if (kind == "circle") {
        layout.kind = LayoutDirective::Kind::Circle;
    } else if (kind == "grid") {
        layout.kind = LayoutDirective::Kind::Grid;
    } else {
        err = LineError{col, "expected layout circle(...) or grid(...)"};
        return std::nullopt;
    }
    if (!cur.consume('(')) {
        err = LineError{cur.column(), "expected '(' after layout name"};
        return std::nullopt;
    }
    if (!cur.consume(')')) {
        do {
            const auto v = cur.number();
            if (!v) {
                err = LineError{cur.column(), "expected a number in layout arguments"};
                return std::nullopt;
            }
            layout.args.push_back(*v);
        } while (cur.consume(','));
        if (!cur.consume(')')) {
            err = LineError{cur.column(), "unterminated layout argument list, expected ')'"};
            return std::nullopt;
        }
    }
    return layout;
}

std::optional<LineError> parsePrimitiveLine(LineCursor& cur, ScoreSegment& seg) {
    const auto name = cur.identifier();
    if (!name) return LineError{cur.column(), "expected primitive name"};
    seg.primitive.name = *name;
    if (!cur.consume("from")) return LineError{cur.column(), "expected 'from <t_i>'"};
    const auto ti = cur.number();
    if (!ti) return LineError{cur.column(), "expected start time after 'from'"};
    if (!cur.consume("to")) return LineError{cur.column(), "expected 'to <t_f>'"};
    const auto tf = cur.number();
    if (!tf) return LineError{cur.column(), "expected end time after 'to'"};
    seg.primitive.t_i = *ti;
    seg.primitive.t_f = *tf;

    if (cur.consume('{')) {
        if (!cur.consume('}')) {
            do {
                const std::size_t col = cur.column();
                const auto key = cur.identifier();
                if (!key) return LineError{col, "expected parameter name"};
                if (!cur.consume('=')) return LineError{cur.column(), "expected '=' after parameter '" + *key + "'"};
                const auto value = cur.number();
                if (!value) return LineError{cur.column(), "expected numeric value for parameter '" + *key + "'"};
                if (seg.primitive.parameters.contains(*key)) {
                    return LineError{col, "parameter '" + *key + "' given twice"};
                }
                seg.primitive.parameters[*key] = *value;
            } while (cur.consume(','));
            if (!cur.consume('}')) return LineError{cur.column(), "unterminated parameter block, expected '}'"};
        }
    }
    if (cur.consume("layout")) {
        if (!cur.consume('=')) return LineError{cur.column(), "expected '=' after 'layout'"};
        std::optional<LineError> err;
        seg.layout = parseLayout(cur, err);
        if (err) return err;
    }
    if (!cur.atEnd()) return LineError{cur.column(), "unexpected trailing text"};
    return std::nullopt;
}

std::optional<LineError> parseWaypointLine(LineCursor& cur, WaypointTarget& wp) {
    const auto t = cur.number();
    if (!t) return LineError{cur.column(), "expected waypoint time"};
    wp.t = *t;
    if (!cur.consume("drone")) return LineError{cur.column(), "expected 'drone <index>'"};
    const auto idx = cur.integer();
    if (!idx) return LineError{cur.column(), "expected integer drone index"};
    wp.drone = *idx;
    if (!cur.consume("->")) return LineError{cur.column(), "expected '->' before the target"};
    if (!cur.consume('(')) return LineError{cur.column(), "expected '(' to open the target tuple"};
    for (int axis = 0; axis < 3; ++axis) {
        if (axis > 0 && !cur.consume(',')) return LineError{cur.column(), "expected ',' in target tuple"};
        const auto v = cur.number();
        if (!v) return LineError{cur.column(), "expected coordinate in target tuple"};
        wp.target[axis] = *v;
    }
    if (!cur.consume(')')) return LineError{cur.column(), "malformed tuple, expected ')'"};
    if (!cur.atEnd()) return LineError{cur.column(), "unexpected trailing text"};
    return std::nullopt;
}

std::string formatNumber(double v) { return fmt::format("{}", v); }

}  // namespace

std::string_view toString(Modality m) { return m == Modality::Waypoints ? "waypoints" : "primitives"; }

std::optional<Modality> modalityFromString(std::string_view s) {
    if (s == "waypoints" || s == "waypoint") return Modality::Waypoints;
    if (s == "primitives" || s == "primitive") return Modality::Primitives;
    return std::nullopt;
}

std::string_view toString(FailureCode code) {
    switch (code) {
        case FailureCode::UnknownPrimitive: return "UnknownPrimitive";
        case FailureCode::BadParameter: return "BadParameter";
        case FailureCode::BeatNotInTimeline: return "BeatNotInTimeline";
        case FailureCode::CoverageGap: return "CoverageGap";
        case FailureCode::MissingWaypoint: return "MissingWaypoint";
        case FailureCode::DuplicateTarget: return "DuplicateTarget";
        case FailureCode::LimitViolation: return "LimitViolation";
        case FailureCode::SyntaxError: return "SyntaxError";
    }
    return "Unknown";
}

int LayoutDirective::droneCount() const {
    if (kind == Kind::Circle) return args.empty() ? 0 : static_cast<int>(args[0]);
    return args.size() < 2 ? 0 : static_cast<int>(args[0]) * static_cast<int>(args[1]);
}

std::string LayoutDirective::toString() const {
    std::string out = kind == Kind::Circle ? "circle(" : "grid(";
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (i > 0) out += ",";
        out += formatNumber(args[i]);
    }
    return out + ")";
}

std::vector<Configuration> LayoutDirective::anchors(const PhysicalLimits& limits) const {
    constexpr double kDefaultHeight = 1.5;
    auto isCount = [](double v) { return v >= 1.0 && v == std::floor(v) && v <= 10000.0; };
    if (kind == Kind::Circle) {
        if (args.size() < 2 || args.size() > 3 || !isCount(args[0])) {
            throw LayoutError("circle(n, radius[, z]) expects a positive integer count and a radius");
        }
        const double z = args.size() == 3 ? args[2] : kDefaultHeight;
        return layoutCircle(static_cast<int>(args[0]), args[1], Vec3(0.0, 0.0, z), limits);
    }
    if (args.size() < 3 || args.size() > 4 || !isCount(args[0]) || !isCount(args[1])) {
        throw LayoutError("grid(rows, cols, spacing[, z]) expects positive integer rows and cols and a spacing");
    }
    const int rows = static_cast<int>(args[0]);
    const int cols = static_cast<int>(args[1]);
    const double spacing = args[2];
    const double z = args.size() == 4 ? args[3] : kDefaultHeight;
    const Vec3 origin(-(cols - 1) * spacing / 2.0, -(rows - 1) * spacing / 2.0, z);
    return layoutGrid(rows, cols, spacing, origin, limits);
}

int Score::swarmSize() const {
    if (declared_drones > 0) return declared_drones;
    int n = 0;
    if (modality == Modality::Primitives) {
        for (const auto& s : segments) {
            if (s.layout) n = std::max(n, s.layout->droneCount());
        }
    } else {
        for (const auto& w : waypoints) n = std::max(n, w.drone + 1);
    }
    return n;
}

double Score::startTime() const {
    double t = std::numeric_limits<double>::infinity();
    for (const auto& s : segments) t = std::min(t, s.primitive.t_i);
    for (const auto& w : waypoints) t = std::min(t, w.t);
    return std::isfinite(t) ? t : 0.0;
}

double Score::endTime() const {
    double t = -std::numeric_limits<double>::infinity();
    for (const auto& s : segments) t = std::max(t, s.primitive.t_f);
    for (const auto& w : waypoints) t = std::max(t, w.t);
    return std::isfinite(t) ? t : 0.0;
}

std::string Score::toText() const {
    std::ostringstream out;
    if (declared_drones > 0) out << "drones " << declared_drones << '\n';
    for (const auto& s : segments) {
        out << "primitive " << s.primitive.name << " from " << formatNumber(s.primitive.t_i) << " to "
            << formatNumber(s.primitive.t_f) << " {";
        bool first = true;
        for (const auto& [k, v] : s.primitive.parameters) {
            out << (first ? "" : ", ") << k << '=' << formatNumber(v);
            first = false;
        }
        out << '}';
        if (s.layout) out << " layout=" << s.layout->toString();
        out << '\n';
    }
    for (const auto& w : waypoints) {
        out << "waypoint " << formatNumber(w.t) << " drone " << w.drone << " -> (" << formatNumber(w.target.x())
            << ", " << formatNumber(w.target.y()) << ", " << formatNumber(w.target.z()) << ")\n";
    }
    return out.str();
}

ParsedScore parseScore(std::string_view text) {
    ParsedScore result;
    std::optional<Modality> modality;
    int line_no = 0;
    std::size_t start = 0;
    auto syntax = [&](int line, std::size_t column, const std::string& message) {
        result.errors.add({FailureCode::SyntaxError, line, -1, std::nullopt, {},
                           fmt::format("line {}, column {}: {}", line, column, message)});
    };

    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        LineCursor cur(line);
        if (cur.atEnd()) continue;
        const std::size_t keyword_col = cur.column();
        const auto keyword = cur.identifier();
        if (keyword == "drones") {
            const auto n = cur.integer();
            if (!n || *n < 1 || !cur.atEnd()) {
                syntax(line_no, cur.column(), "expected 'drones <positive integer>'");
            } else {
                result.score.declared_drones = *n;
            }
        } else if (keyword == "primitive" || keyword == "waypoint") {
            const Modality m = keyword == "primitive" ? Modality::Primitives : Modality::Waypoints;
            if (modality && *modality != m) {
                syntax(line_no, keyword_col,
                       "cannot mix primitive and waypoint lines in one score (score is " +
                           std::string(toString(*modality)) + ")");
                continue;
            }
            std::optional<LineError> err;
            if (m == Modality::Primitives) {
                ScoreSegment seg;
                seg.line = line_no;
                err = parsePrimitiveLine(cur, seg);
                if (!err) result.score.segments.push_back(std::move(seg));
            } else {
                WaypointTarget wp;
                wp.line = line_no;
                err = parseWaypointLine(cur, wp);
                if (!err) result.score.waypoints.push_back(wp);
            }
            if (err) {
                syntax(line_no, err->column, err->message);
            } else {
                modality = m;
            }
        } else {
            syntax(line_no, keyword_col, "unknown statement; expected 'primitive', 'waypoint' or 'drones'");
        }
    }
    if (modality) result.score.modality = *modality;
    return result;
}

std::string readTextFile(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace swarmchor
