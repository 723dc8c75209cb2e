#include "flag/penman.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <regex>
#include <set>
#include <unordered_map>

#include "flag/error.hpp"
#include "flag/random.hpp"

FLAG_NAMESPACE_BEGIN
namespace {

bool is_canonical_role(std::string_view role) {
  return !role.ends_with("-of") || role == ":consist-of";
}

std::string invert_role(std::string_view role) { return std::string(role) + "-of"; }

// ---------------------------------------------------------------------------
// Lexer

enum class Tok { LParen, RParen, Slash, Role, String, Symbol, End };

struct Token {
  Tok kind;
  std::string text;
  std::size_t line;
};

bool is_delim(char c) {
  return c == '(' || c == ')' || c == '/' || c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

class Lexer {
 public:
  // lines[i] is the text of source line first_line + i.
  Lexer(const std::vector<std::string_view>& lines, const std::vector<std::size_t>& line_numbers) {
    for (std::size_t li = 0; li < lines.size(); ++li) scan_line(lines[li], line_numbers[li]);
    const std::size_t last = line_numbers.empty() ? 0 : line_numbers.back();
    tokens_.push_back({Tok::End, "", last});
  }

  const Token& peek() const { return tokens_[pos_]; }
  Token next() { return tokens_[pos_ == tokens_.size() - 1 ? pos_ : pos_++]; }

 private:
  void scan_line(std::string_view s, std::size_t line) {
    std::size_t i = 0;
    while (i < s.size()) {
      const char c = s[i];
      if (c == ' ' || c == '\t' || c == '\r') {
        ++i;
      } else if (c == '(') {
        tokens_.push_back({Tok::LParen, "(", line});
        ++i;
      } else if (c == ')') {
        tokens_.push_back({Tok::RParen, ")", line});
        ++i;
      } else if (c == '/') {
        tokens_.push_back({Tok::Slash, "/", line});
        ++i;
      } else if (c == '"') {
        std::size_t j = i + 1;
        while (j < s.size() && s[j] != '"') j += (s[j] == '\\') ? 2 : 1;
        if (j >= s.size()) throw ParseError(line, "unterminated string literal");
        tokens_.push_back({Tok::String, std::string(s.substr(i, j + 1 - i)), line});
        i = j + 1;
      } else {
        std::size_t j = i;
        while (j < s.size() && !is_delim(s[j])) ++j;
        const Tok kind = c == ':' ? Tok::Role : Tok::Symbol;
        if (kind == Tok::Role && j == i + 1) throw ParseError(line, "empty role label");
        tokens_.push_back({kind, std::string(s.substr(i, j - i)), line});
        i = j;
      }
    }
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Block parser

// Bare symbols shaped like AMR variables ("w", "b2", "xv12") must resolve to
// a declared variable; anything else ("-", "imperative", "3.5") is a constant.
bool looks_like_variable(const std::string& s) {
  static const std::regex pattern("^[A-Za-z]{1,2}[0-9]*$");
  return std::regex_match(s, pattern) && s != "-" && s != "+";
}

class BlockParser {
 public:
  explicit BlockParser(Lexer& lex) : lex_(lex) {}

  SentenceAmr parse() {
    const Token& first = lex_.peek();
    if (first.kind != Tok::LParen) throw ParseError(first.line, "expected '(' to open the graph");
    parse_node();
    const Token& trailing = lex_.peek();
    if (trailing.kind == Tok::RParen) throw ParseError(trailing.line, "unbalanced parentheses: unexpected ')'");
    if (trailing.kind != Tok::End) throw ParseError(trailing.line, "unexpected content after the root node: '" + trailing.text + "'");
    return resolve();
  }

 private:
  // Appearance-ordered slot for either a variable or a constant.
  struct Slot {
    std::string id;
    bool constant = false;
  };

  struct PendingEdge {
    std::string src;
    std::string dst;        // variable id, or the raw symbol for unresolved targets
    std::string role;
    std::size_t line;
    bool symbol = false;    // dst is a bare symbol whose meaning is resolved later
    bool inverted = false;
  };

  std::string parse_node() {
    const Token open = lex_.next();  // '('
    const Token var = lex_.next();
    if (var.kind == Tok::End) throw ParseError(open.line, "unbalanced parentheses: missing ')'");
    if (var.kind != Tok::Symbol) throw ParseError(var.line, "expected a variable after '('");
    occur(var.text, var.line);

    if (lex_.peek().kind == Tok::Slash) {
      lex_.next();
      const Token concept_tok = lex_.next();
      if (concept_tok.kind != Tok::Symbol && concept_tok.kind != Tok::String) {
        if (concept_tok.kind == Tok::End) throw ParseError(open.line, "unbalanced parentheses: missing ')'");
        throw ParseError(concept_tok.line, "expected a concept after '/'");
      }
      auto [it, inserted] = concepts_.emplace(var.text, concept_tok.text);
      if (!inserted) {
        throw ParseError(concept_tok.line, "duplicate concept definition for variable '" + var.text + "'");
      }
    }

    for (;;) {
      const Token t = lex_.next();
      if (t.kind == Tok::RParen) return var.text;
      if (t.kind == Tok::End) throw ParseError(open.line, "unbalanced parentheses: missing ')'");
      if (t.kind != Tok::Role) throw ParseError(t.line, "expected a role or ')' but found '" + t.text + "'");

      const bool inverted = !is_canonical_role(t.text);
      const std::string role = inverted ? t.text.substr(0, t.text.size() - 3) : t.text;
      const Token& target = lex_.peek();
      if (target.kind == Tok::LParen) {
        const std::size_t slot = edges_.size();
        edges_.push_back({var.text, "", role, t.line, false, inverted});
        const std::string child = parse_node();
        edges_[slot].dst = child;
      } else if (target.kind == Tok::String) {
        const Token lit = lex_.next();
        if (inverted) throw ParseError(t.line, "inverted role cannot point at a constant");
        const std::string id = new_constant();
        constant_concepts_[id] = lit.text;
        edges_.push_back({var.text, id, role, t.line, false, false});
      } else if (target.kind == Tok::Symbol) {
        const Token sym = lex_.next();
        // Reserve a slot now so constants keep their appearance order.
        slots_.push_back({"", true});
        pending_slot_.push_back(slots_.size() - 1);
        edges_.push_back({var.text, sym.text, role, t.line, true, inverted});
      } else if (target.kind == Tok::End) {
        throw ParseError(open.line, "unbalanced parentheses: missing ')'");
      } else {
        throw ParseError(target.line, "role '" + t.text + "' has no target");
      }
    }
  }

  void occur(const std::string& var, std::size_t line) {
    if (first_line_.emplace(var, line).second) slots_.push_back({var, false});
  }

  std::string new_constant() {
    std::string id = "_s" + std::to_string(n_constants_++);
    slots_.push_back({id, true});
    return id;
  }

  SentenceAmr resolve() {
    for (const auto& slot : slots_) {
      if (!slot.constant && !concepts_.count(slot.id)) {
        throw ParseError(first_line_.at(slot.id), "edge to undeclared variable '" + slot.id + "' (no concept given)");
      }
    }

    // Resolve bare-symbol targets in appearance order.
    std::size_t pending = 0;
    for (auto& e : edges_) {
      if (!e.symbol) continue;
      Slot& slot = slots_[pending_slot_[pending++]];
      if (concepts_.count(e.dst)) {
        e.symbol = false;  // reentrant reference; the reserved slot stays empty
        continue;
      }
      if (looks_like_variable(e.dst)) {
        throw ParseError(e.line, "edge to undeclared variable '" + e.dst + "'");
      }
      if (e.inverted) throw ParseError(e.line, "inverted role cannot point at a constant");
      slot.id = "_s" + std::to_string(n_constants_++);
      constant_concepts_[slot.id] = e.dst;
      e.dst = slot.id;
      e.symbol = false;
    }

    // Number constants by appearance so quoted and bare literals interleave.
    std::unordered_map<std::string, std::string> renamed;
    std::unordered_map<std::string, std::string> numbered_constants;
    std::size_t k = 0;
    for (auto& slot : slots_) {
      if (!slot.constant || slot.id.empty()) continue;
      std::string id = "_c" + std::to_string(k++);
      numbered_constants[id] = constant_concepts_.at(slot.id);
      renamed[slot.id] = id;
      slot.id = id;
    }
    for (auto& e : edges_) {
      if (auto it = renamed.find(e.dst); it != renamed.end()) e.dst = it->second;
    }

    SentenceAmr g;
    for (const auto& slot : slots_) {
      if (slot.id.empty()) continue;
      AmrNode n;
      n.id = slot.id;
      n.constant = slot.constant;
      n.concept_label = slot.constant ? numbered_constants.at(slot.id) : concepts_.at(slot.id);
      g.nodes.push_back(std::move(n));
    }
    for (const auto& e : edges_) {
      if (e.inverted) {
        g.edges.push_back({e.dst, e.src, e.role});
      } else {
        g.edges.push_back({e.src, e.dst, e.role});
      }
    }
    return g;
  }

  Lexer& lex_;
  std::vector<Slot> slots_;
  std::vector<std::size_t> pending_slot_;
  std::unordered_map<std::string, std::size_t> first_line_;
  std::unordered_map<std::string, std::string> concepts_;
  std::unordered_map<std::string, std::string> constant_concepts_;
  std::vector<PendingEdge> edges_;
  std::size_t n_constants_ = 0;
};

// ---------------------------------------------------------------------------
// Metadata

// Splits "# ::tok a b ::alignments x-0-1" into {"tok": "a b", "alignments": "x-0-1"}.
std::map<std::string, std::string> parse_metadata(std::string_view line) {
  std::map<std::string, std::string> fields;
  std::size_t pos = line.find("::");
  while (pos != std::string_view::npos) {
    std::size_t next = line.find(" ::", pos + 2);
    std::string_view field = line.substr(pos + 2, next == std::string_view::npos ? std::string_view::npos : next - pos - 2);
    const std::size_t sp = field.find_first_of(" \t");
    std::string key(field.substr(0, sp));
    std::string value;
    if (sp != std::string_view::npos) {
      std::string_view v = field.substr(sp + 1);
      while (!v.empty() && (v.back() == ' ' || v.back() == '\t' || v.back() == '\r')) v.remove_suffix(1);
      value = std::string(v);
    }
    fields[key] = value;
    pos = next == std::string_view::npos ? next : next + 1;
  }
  return fields;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_u32(std::string_view s, std::uint32_t& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

void apply_alignments(SentenceAmr& g, std::string_view value, std::size_t line) {
  for (const auto& entry : split_ws(value)) {
    const std::size_t second = entry.rfind('-');
    const std::size_t first = second == std::string::npos || second == 0 ? std::string::npos : entry.rfind('-', second - 1);
    if (first == std::string::npos || first == 0) {
      throw ParseError(line, "malformed alignment span '" + entry + "' (expected id-start-end)");
    }
    const std::string id = entry.substr(0, first);
    std::uint32_t start = 0, end = 0;
    if (!parse_u32(std::string_view(entry).substr(first + 1, second - first - 1), start) ||
        !parse_u32(std::string_view(entry).substr(second + 1), end)) {
      throw ParseError(line, "malformed alignment span '" + entry + "' (non-numeric bounds)");
    }
    if (start >= end || end > g.tokens.size()) {
      throw ParseError(line, "malformed alignment span '" + entry + "' (outside [0, " +
                                 std::to_string(g.tokens.size()) + ") or empty)");
    }
    auto idx = g.find_node(id);
    if (!idx) throw ParseError(line, "alignment for unknown node '" + id + "'");
    if (g.nodes[*idx].alignment) throw ParseError(line, "node '" + id + "' aligned twice");
    g.nodes[*idx].alignment = TokenSpan{start, end};
  }
}

SentenceAmr parse_block(const std::vector<std::string_view>& lines, const std::vector<std::size_t>& numbers,
                        std::size_t sentence_index) {
  std::vector<std::string_view> graph_lines;
  std::vector<std::size_t> graph_numbers;
  std::optional<std::string> tok_value;
  std::optional<std::pair<std::string, std::size_t>> align_value;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view l = lines[i];
    const std::size_t nonspace = l.find_first_not_of(" \t");
    if (nonspace != std::string_view::npos && l[nonspace] == '#') {
      auto fields = parse_metadata(l);
      if (auto it = fields.find("tok"); it != fields.end()) tok_value = it->second;
      if (auto it = fields.find("alignments"); it != fields.end()) align_value = {{it->second, numbers[i]}};
    } else {
      graph_lines.push_back(l);
      graph_numbers.push_back(numbers[i]);
    }
  }
  if (graph_lines.empty()) throw ParseError(numbers.front(), "block has metadata but no graph");

  Lexer lex(graph_lines, graph_numbers);
  SentenceAmr g = BlockParser(lex).parse();
  g.sentence_index = sentence_index;
  if (tok_value) g.tokens = split_ws(*tok_value);
  if (align_value) apply_alignments(g, align_value->first, align_value->second);
  return g;
}

// ---------------------------------------------------------------------------
// Serializer

class Serializer {
 public:
  explicit Serializer(const SentenceAmr& g) : g_(g), placed_(g.nodes.size(), false), used_(g.edges.size(), false) {
    for (std::size_t i = 0; i < g.nodes.size(); ++i) index_[g.nodes[i].id] = i;
  }

  std::string run() {
    emit(0, 0);
    return out_;
  }

 private:
  void newline(int depth) {
    out_ += '\n';
    out_.append(static_cast<std::size_t>(4 * depth), ' ');
  }

  void emit(std::size_t v, int depth) {
    placed_[v] = true;
    const AmrNode& n = g_.nodes[v];
    out_ += '(';
    out_ += n.id;
    out_ += " / ";
    out_ += n.concept_label;

    for (std::size_t e = 0; e < g_.edges.size(); ++e) {
      if (used_[e] || g_.edges[e].src != n.id) continue;
      used_[e] = true;
      const std::size_t dst = index_.at(g_.edges[e].dst);
      newline(depth + 1);
      out_ += g_.edges[e].role;
      out_ += ' ';
      target(dst, depth + 1);
    }
    for (std::size_t e = 0; e < g_.edges.size(); ++e) {
      if (used_[e] || g_.edges[e].dst != n.id) continue;
      const std::size_t src = index_.at(g_.edges[e].src);
      if (placed_[src]) continue;  // emitted forward when src is expanded
      used_[e] = true;
      newline(depth + 1);
      out_ += invert_role(g_.edges[e].role);
      out_ += ' ';
      target(src, depth + 1);
    }
    out_ += ')';
  }

  void target(std::size_t v, int depth) {
    const AmrNode& n = g_.nodes[v];
    if (n.constant) {
      placed_[v] = true;
      out_ += n.concept_label;
    } else if (placed_[v]) {
      out_ += n.id;
    } else {
      emit(v, depth);
    }
  }

  const SentenceAmr& g_;
  std::vector<bool> placed_;
  std::vector<bool> used_;
  std::unordered_map<std::string, std::size_t> index_;
  std::string out_;
};

std::vector<std::string> concept_pool() {
  return {"we", "invest-01", "stock", "business", "grow-01", "revenue", "quarter", "increase-01",
          "company", "market", "expect-01", "strong", "product", "customer", "margin", "report-01",
          "year", "earn-01", "cost", "demand-01"};
}

}  // namespace

std::optional<std::size_t> SentenceAmr::find_node(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id == id) return i;
  }
  return std::nullopt;
}

void SentenceAmr::validate() const {
  if (nodes.empty()) throw InvalidArgument("sentence graph has no nodes");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.id.empty()) throw InvalidArgument("node with empty id");
    if (n.concept_label.empty()) throw InvalidArgument("node '" + n.id + "' has an empty concept");
    if (!index.emplace(n.id, i).second) throw InvalidArgument("duplicate node id '" + n.id + "'");
    if (n.alignment) {
      if (n.alignment->start >= n.alignment->end || n.alignment->end > tokens.size()) {
        throw InvalidArgument("alignment of node '" + n.id + "' lies outside the token range");
      }
    }
  }
  if (nodes[0].constant) throw InvalidArgument("root cannot be a constant");

  std::vector<int> indeg(nodes.size(), 0), outdeg(nodes.size(), 0);
  std::vector<std::vector<std::size_t>> adj(nodes.size());
  for (const auto& e : edges) {
    if (e.role.empty() || e.role[0] != ':') throw InvalidArgument("role '" + e.role + "' must start with ':'");
    if (!is_canonical_role(e.role)) throw InvalidArgument("role '" + e.role + "' is stored inverted");
    auto s = index.find(e.src);
    auto d = index.find(e.dst);
    if (s == index.end() || d == index.end()) {
      throw InvalidArgument("edge " + e.src + " " + e.role + " " + e.dst + " references a missing node");
    }
    ++outdeg[s->second];
    ++indeg[d->second];
    adj[s->second].push_back(d->second);
    adj[d->second].push_back(s->second);
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].constant && (indeg[i] != 1 || outdeg[i] != 0)) {
      throw InvalidArgument("constant '" + nodes[i].id + "' must have exactly one incoming and no outgoing edge");
    }
  }
  std::vector<bool> seen(nodes.size(), false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    for (std::size_t w : adj[v]) {
      if (!seen[w]) {
        seen[w] = true;
        ++reached;
        stack.push_back(w);
      }
    }
  }
  if (reached != nodes.size()) throw InvalidArgument("sentence graph is not connected");
}

bool equivalent(const SentenceAmr& a, const SentenceAmr& b) {
  if (a.sentence_index != b.sentence_index || a.tokens != b.tokens) return false;
  if (a.nodes.size() != b.nodes.size() || a.edges.size() != b.edges.size()) return false;
  auto na = a.nodes, nb = b.nodes;
  std::sort(na.begin(), na.end());
  std::sort(nb.begin(), nb.end());
  if (na != nb) return false;
  auto ea = a.edges, eb = b.edges;
  std::sort(ea.begin(), ea.end());
  std::sort(eb.begin(), eb.end());
  return ea == eb;
}

std::vector<SentenceAmr> parse_penman_document(std::string_view text) {
  std::vector<SentenceAmr> out;
  std::vector<std::string_view> block;
  std::vector<std::size_t> numbers;

  auto flush = [&] {
    if (block.empty()) return;
    out.push_back(parse_block(block, numbers, out.size()));
    block.clear();
    numbers.clear();
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      flush();
    } else {
      block.push_back(line);
      numbers.push_back(line_no);
    }
    if (eol == text.size()) break;
    pos = eol + 1;
  }
  flush();
  return out;
}

std::string serialize_penman(const SentenceAmr& graph) {
  graph.validate();
  std::string out = "# ::tok";
  for (const auto& t : graph.tokens) {
    out += ' ';
    out += t;
  }
  out += '\n';
  std::string align;
  for (const auto& n : graph.nodes) {
    if (!n.alignment) continue;
    align += ' ' + n.id + '-' + std::to_string(n.alignment->start) + '-' + std::to_string(n.alignment->end);
  }
  if (!align.empty()) out += "# ::alignments" + align + '\n';
  out += Serializer(graph).run();
  out += '\n';
  return out;
}

std::string serialize_penman_document(const std::vector<SentenceAmr>& sentences) {
  std::string out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) out += '\n';
    out += serialize_penman(sentences[i]);
  }
  return out;
}

SentenceAmr generate_random_amr(std::uint64_t seed, std::size_t n_nodes, double reentrancy_prob) {
  static const std::vector<std::string> concepts = concept_pool();
  static const std::vector<std::string> roles = {":ARG0", ":ARG1", ":ARG2", ":mod", ":poss", ":time", ":location", ":manner"};
  if (n_nodes == 0) throw InvalidArgument("generate_random_amr needs at least one node");
  if (reentrancy_prob < 0.0 || reentrancy_prob > 1.0) throw InvalidArgument("reentrancy_prob must lie in [0, 1]");

  Rng rng(mix_seed(seed, 0x414d52));
  SentenceAmr g;
  for (std::size_t i = 0; i < n_nodes; ++i) {
    const std::string& c = concepts[rng.below(concepts.size())];
    g.nodes.push_back({"n" + std::to_string(i), c, TokenSpan{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i + 1)}, false});
    g.tokens.push_back(c.substr(0, c.find('-')));
  }
  std::set<std::pair<std::size_t, std::size_t>> present;
  for (std::size_t i = 1; i < n_nodes; ++i) {
    const std::size_t parent = rng.below(i);
    g.edges.push_back({g.nodes[parent].id, g.nodes[i].id, roles[rng.below(roles.size())]});
    present.insert({parent, i});
    if (i >= 2 && rng.bernoulli(reentrancy_prob)) {
      const std::size_t other = rng.below(i);
      if (!present.count({other, i})) {
        g.edges.push_back({g.nodes[other].id, g.nodes[i].id, roles[rng.below(roles.size())]});
        present.insert({other, i});
      }
    }
  }
  return g;
}

FLAG_NAMESPACE_END
