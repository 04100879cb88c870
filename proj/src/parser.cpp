#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sft/ir.hpp"

namespace sft {
namespace {

enum class TokKind { Ident, Int, Punct };

struct Token {
  TokKind kind;
  std::string text;
  int32_t value = 0;
  uint32_t col = 0;
};

bool is_keyword(const std::string& s) {
  return s == "var" || s == "br" || s == "jmp" || s == "out" || s == "halt";
}

std::vector<Token> lex_line(const std::string& line, uint32_t line_no) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (c == '#') break;
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    uint32_t col = static_cast<uint32_t>(i) + 1;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i;
      while (j < line.size() &&
             (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '_')) {
        ++j;
      }
      out.push_back({TokKind::Ident, line.substr(i, j - i), 0, col});
      i = j;
      continue;
    }
    bool neg_literal = c == '-' && i + 1 < line.size() &&
                       std::isdigit(static_cast<unsigned char>(line[i + 1]));
    if (std::isdigit(static_cast<unsigned char>(c)) || neg_literal) {
      size_t j = i + 1;
      while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
      std::string text = line.substr(i, j - i);
      int64_t value = 0;
      try {
        value = std::stoll(text);
      } catch (const std::out_of_range&) {
        throw ParseError(line_no, col, "integer constant out of range");
      }
      if (value < INT32_MIN || value > INT32_MAX) {
        throw ParseError(line_no, col, "integer constant out of range");
      }
      out.push_back({TokKind::Int, text, static_cast<int32_t>(value), col});
      i = j;
      continue;
    }
    if (c == '=' || c == '!' || c == '<' || c == '>') {
      if (i + 1 < line.size() && line[i + 1] == '=') {
        out.push_back({TokKind::Punct, line.substr(i, 2), 0, col});
        i += 2;
        continue;
      }
      if (c == '!') throw ParseError(line_no, col, "unexpected character '!'");
      out.push_back({TokKind::Punct, std::string(1, c), 0, col});
      ++i;
      continue;
    }
    if (c == '+' || c == '-' || c == '*' || c == '/' || c == '?' || c == ':' || c == ';') {
      out.push_back({TokKind::Punct, std::string(1, c), 0, col});
      ++i;
      continue;
    }
    throw ParseError(line_no, col, std::string("unexpected character '") + c + "'");
  }
  return out;
}

struct PendingRef {
  std::string label;
  uint32_t instr = 0;
  bool is_else = false;  // which half of a br the label fills
  uint32_t line = 0;
  uint32_t col = 0;
};

class Parser {
 public:
  Program run(const std::string& source) {
    uint32_t line_no = 0;
    size_t pos = 0;
    while (pos <= source.size()) {
      size_t nl = source.find('\n', pos);
      std::string line =
          source.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
      ++line_no;
      parse_line(line, line_no);
      if (nl == std::string::npos) break;
      pos = nl + 1;
    }
    finish(line_no);
    return std::move(program_);
  }

 private:
  Program program_;
  std::map<std::string, uint32_t> labels_;
  std::vector<PendingRef> pending_;
  std::vector<std::pair<uint32_t, uint32_t>> instr_pos_;
  bool has_halt_ = false;

  // current statement cursor
  const std::vector<Token>* toks_ = nullptr;
  size_t cur_ = 0;
  size_t stmt_end_ = 0;
  uint32_t line_ = 0;
  uint32_t line_len_ = 0;

  [[noreturn]] void fail(uint32_t col, const std::string& msg) {
    throw ParseError(line_, col, msg);
  }

  const Token* peek() const { return cur_ < stmt_end_ ? &(*toks_)[cur_] : nullptr; }
  const Token& take() { return (*toks_)[cur_++]; }

  uint32_t end_col() const {
    if (cur_ > 0 && cur_ <= toks_->size()) {
      const Token& prev = (*toks_)[cur_ - 1];
      return prev.col + static_cast<uint32_t>(prev.text.size());
    }
    return line_len_ + 1;
  }

  const Token& expect_punct(const std::string& p) {
    const Token* t = peek();
    if (!t || t->kind != TokKind::Punct || t->text != p) {
      fail(t ? t->col : end_col(), "expected '" + p + "'");
    }
    return take();
  }

  const Token& expect_ident(const char* what) {
    const Token* t = peek();
    if (!t || t->kind != TokKind::Ident) {
      fail(t ? t->col : end_col(), std::string("expected ") + what);
    }
    return take();
  }

  void expect_done() {
    if (const Token* t = peek()) fail(t->col, "unexpected '" + t->text + "'");
  }

  uint8_t lookup_var(const Token& t) {
    if (is_keyword(t.text)) fail(t.col, "'" + t.text + "' is a keyword, not a variable");
    if (auto v = find_variable(program_, t.text)) return *v;
    fail(t.col, "unknown variable '" + t.text + "'");
  }

  uint8_t declare_var(const Token& t, int32_t initial, bool explicit_decl) {
    if (is_keyword(t.text)) fail(t.col, "'" + t.text + "' is a keyword, not a variable");
    if (auto v = find_variable(program_, t.text)) {
      if (explicit_decl) fail(t.col, "variable '" + t.text + "' is already declared");
      return *v;
    }
    if (program_.variables.size() >= kMaxVariables) {
      fail(t.col, "too many variables (limit " + std::to_string(kMaxVariables) + ")");
    }
    program_.variables.push_back({t.text, initial});
    return static_cast<uint8_t>(program_.variables.size() - 1);
  }

  void emit(const Instruction& ins, uint32_t col) {
    if (program_.instructions.size() >= kMaxInstructions) {
      fail(col, "too many instructions (limit " + std::to_string(kMaxInstructions) + ")");
    }
    program_.instructions.push_back(ins);
    instr_pos_.push_back({line_, col});
  }

  void ref_label(const Token& t, bool is_else) {
    if (is_keyword(t.text)) fail(t.col, "'" + t.text + "' is a keyword, not a label");
    pending_.push_back(
        {t.text, static_cast<uint32_t>(program_.instructions.size()), is_else, line_, t.col});
  }

  void parse_line(const std::string& line, uint32_t line_no) {
    std::vector<Token> toks = lex_line(line, line_no);
    toks_ = &toks;
    line_ = line_no;
    line_len_ = static_cast<uint32_t>(line.size());
    size_t start = 0;
    while (start <= toks.size()) {
      size_t end = start;
      while (end < toks.size() &&
             !(toks[end].kind == TokKind::Punct && toks[end].text == ";")) {
        ++end;
      }
      cur_ = start;
      stmt_end_ = end;
      parse_statement();
      if (end >= toks.size()) break;
      start = end + 1;
    }
  }

  void parse_statement() {
    // leading labels, possibly several
    while (cur_ + 1 < stmt_end_ && (*toks_)[cur_].kind == TokKind::Ident &&
           (*toks_)[cur_ + 1].kind == TokKind::Punct && (*toks_)[cur_ + 1].text == ":") {
      const Token& name = take();
      take();  // ':'
      if (is_keyword(name.text)) fail(name.col, "'" + name.text + "' is a keyword, not a label");
      auto [it, fresh] =
          labels_.emplace(name.text, static_cast<uint32_t>(program_.instructions.size()));
      if (!fresh) fail(name.col, "label '" + name.text + "' is already defined");
      program_.labels.push_back({name.text, it->second});
    }
    const Token* t = peek();
    if (!t) return;

    if (t->kind == TokKind::Int) fail(t->col, "statement cannot start with a number");
    if (t->kind == TokKind::Punct) fail(t->col, "unexpected '" + t->text + "'");

    if (t->text == "var") {
      take();
      const Token& name = expect_ident("variable name");
      expect_punct("=");
      const Token* v = peek();
      if (!v || v->kind != TokKind::Int) {
        fail(v ? v->col : end_col(), "expected integer initial value");
      }
      take();
      declare_var(name, v->value, true);
      expect_done();
      return;
    }
    if (t->text == "halt") {
      take();
      emit({}, t->col);
      has_halt_ = true;
      expect_done();
      return;
    }
    if (t->text == "out") {
      take();
      const Token& v = expect_ident("variable name");
      Instruction ins;
      ins.opcode = Opcode::Out;
      ins.a = lookup_var(v);
      emit(ins, t->col);
      expect_done();
      return;
    }
    if (t->text == "jmp") {
      take();
      const Token& target = expect_ident("label name");
      ref_label(target, false);
      Instruction ins;
      ins.opcode = Opcode::Jmp;
      emit(ins, t->col);
      expect_done();
      return;
    }
    if (t->text == "br") {
      take();
      const Token& lhs = expect_ident("variable name");
      uint8_t a = lookup_var(lhs);
      const Token* op = peek();
      Relop relop = Relop::Eq;
      if (op && op->kind == TokKind::Punct && op->text == "==") relop = Relop::Eq;
      else if (op && op->kind == TokKind::Punct && op->text == "!=") relop = Relop::Ne;
      else if (op && op->kind == TokKind::Punct && op->text == "<") relop = Relop::Lt;
      else if (op && op->kind == TokKind::Punct && op->text == ">=") relop = Relop::Ge;
      else if (op && op->kind == TokKind::Punct && op->text == ">") relop = Relop::Gt;
      else if (op && op->kind == TokKind::Punct && op->text == "<=") relop = Relop::Le;
      else fail(op ? op->col : end_col(), "expected comparison operator");
      take();
      const Token& rhs = expect_ident("variable name");
      uint8_t b = lookup_var(rhs);
      expect_punct("?");
      const Token& then_label = expect_ident("label name");
      expect_punct(":");
      const Token& else_label = expect_ident("label name");
      ref_label(then_label, false);
      ref_label(else_label, true);
      emit(make_br(relop, a, b, 0, 0), t->col);
      expect_done();
      return;
    }

    // assignment: dst = <int> | <var> | <var> op <var>
    const Token& dst_tok = take();
    expect_punct("=");
    const Token* rhs = peek();
    if (!rhs) fail(end_col(), "expected expression");
    if (rhs->kind == TokKind::Int) {
      take();
      Instruction ins;
      ins.opcode = Opcode::Const;
      ins.imm = rhs->value;
      ins.dst = declare_var(dst_tok, 0, false);
      emit(ins, dst_tok.col);
      expect_done();
      return;
    }
    if (rhs->kind != TokKind::Ident) fail(rhs->col, "expected expression");
    const Token& first = take();
    const Token* op = peek();
    if (!op) {
      Instruction ins;
      ins.opcode = Opcode::Mov;
      ins.a = lookup_var(first);
      ins.dst = declare_var(dst_tok, 0, false);
      emit(ins, dst_tok.col);
      return;
    }
    if (op->kind != TokKind::Punct ||
        (op->text != "+" && op->text != "-" && op->text != "*" && op->text != "/")) {
      fail(op->col, "expected arithmetic operator");
    }
    take();
    const Token& second = expect_ident("variable name");
    Instruction ins;
    ins.opcode = op->text == "+"   ? Opcode::Add
                 : op->text == "-" ? Opcode::Sub
                 : op->text == "*" ? Opcode::Mul
                                   : Opcode::Div;
    ins.a = lookup_var(first);
    ins.b = lookup_var(second);
    ins.dst = declare_var(dst_tok, 0, false);
    emit(ins, dst_tok.col);
    expect_done();
  }

  void finish(uint32_t last_line) {
    for (const PendingRef& ref : pending_) {
      auto it = labels_.find(ref.label);
      if (it == labels_.end()) {
        throw ParseError(ref.line, ref.col, "unknown label '" + ref.label + "'");
      }
      uint32_t target = it->second;
      if (target >= program_.instructions.size()) {
        throw ParseError(ref.line, ref.col,
                         "label '" + ref.label + "' points past the last instruction");
      }
      Instruction& ins = program_.instructions[ref.instr];
      if (ins.opcode == Opcode::Jmp) {
        ins.imm = static_cast<int32_t>(target);
      } else {
        uint32_t packed = static_cast<uint32_t>(ins.imm);
        if (ref.is_else) {
          packed = (packed & 0xffffu) | (target << 16);
        } else {
          packed = (packed & 0xffff0000u) | target;
        }
        ins.imm = static_cast<int32_t>(packed);
      }
    }
    if (!has_halt_) throw ParseError(last_line, 1, "program has no halt instruction");
    if (!program_.instructions.back().is_terminator()) {
      auto [l, c] = instr_pos_.back();
      throw ParseError(l, c, "last instruction must be halt, jmp, or br");
    }
  }
};

}  // namespace

Program parse_text(const std::string& source) {
  Parser p;
  return p.run(source);
}

}  // namespace sft
