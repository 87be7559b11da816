// rvm: resource-safe bytecode virtual machine
// Copyright 2026 The rvm Authors.
// SPDX-License-Identifier: Apache-2.0
#include "rvm/textfmt.hpp"

#include <cctype>
#include <map>
#include <set>

namespace rvm {

namespace {

struct Token {
    enum class Kind { Ident, Number, AddressLit, Punct, End, Error };
    Kind kind = Kind::End;
    std::string text;
    std::uint64_t number = 0;
    char punct = 0;
    std::size_t line = 1;
    std::size_t column = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view text) : text_(text) { advance(); }

    const Token& peek() const { return current_; }

    Token take() {
        Token t = current_;
        advance();
        return t;
    }

private:
    void advance() {
        skip_trivia();
        current_ = Token{};
        current_.line = line_;
        current_.column = column_;
        if (pos_ >= text_.size()) {
            current_.kind = Token::Kind::End;
            return;
        }
        char c = text_[pos_];
        if (c == '{' || c == '}' || c == ':' || c == ',') {
            current_.kind = Token::Kind::Punct;
            current_.punct = c;
            bump();
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            if (c == '0' && pos_ + 1 < text_.size() &&
                (text_[pos_ + 1] == 'x' || text_[pos_ + 1] == 'X')) {
                lex_address();
                return;
            }
            lex_number();
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            lex_ident();
            return;
        }
        current_.kind = Token::Kind::Error;
        current_.text = std::string(1, c);
        bump();
    }

    void lex_address() {
        std::size_t start = pos_;
        bump();  // 0
        bump();  // x
        while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_])))
            bump();
        current_.text = std::string(text_.substr(start, pos_ - start));
        current_.kind =
            Address::parse(current_.text).has_value() ? Token::Kind::AddressLit : Token::Kind::Error;
    }

    void lex_number() {
        std::uint64_t value = 0;
        bool overflow = false;
        std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
            std::uint64_t digit = static_cast<std::uint64_t>(text_[pos_] - '0');
            if (value > (UINT64_MAX - digit) / 10)
                overflow = true;
            else
                value = value * 10 + digit;
            bump();
        }
        current_.text = std::string(text_.substr(start, pos_ - start));
        if (overflow) {
            current_.kind = Token::Kind::Error;
            current_.text = "integer literal out of range";
            return;
        }
        current_.kind = Token::Kind::Number;
        current_.number = value;
    }

    void lex_ident() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                       text_[pos_] == '_'))
            bump();
        current_.kind = Token::Kind::Ident;
        current_.text = std::string(text_.substr(start, pos_ - start));
    }

    void skip_trivia() {
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n')
                    bump();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                bump();
            } else {
                break;
            }
        }
    }

    void bump() {
        if (text_[pos_] == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        ++pos_;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t column_ = 1;
    Token current_;
};

class Parser {
public:
    explicit Parser(std::string_view text) : lexer_(text) {}

    std::vector<Diagnostic> diagnostics;

    void error(const Token& at, std::string message) {
        diagnostics.push_back({std::move(message), at.line, at.column});
    }

    bool failed() const { return !diagnostics.empty(); }

    bool at_ident(std::string_view word) const {
        return lexer_.peek().kind == Token::Kind::Ident && lexer_.peek().text == word;
    }

    bool at_punct(char c) const {
        return lexer_.peek().kind == Token::Kind::Punct && lexer_.peek().punct == c;
    }

    bool eat_ident(std::string_view word) {
        if (!at_ident(word))
            return false;
        lexer_.take();
        return true;
    }

    std::optional<std::string> expect_ident(const char* what) {
        if (lexer_.peek().kind != Token::Kind::Ident) {
            error(lexer_.peek(), std::string("expected ") + what);
            return std::nullopt;
        }
        return lexer_.take().text;
    }

    bool expect_punct(char c) {
        if (!at_punct(c)) {
            error(lexer_.peek(), std::string("expected '") + c + "'");
            return false;
        }
        lexer_.take();
        return true;
    }

    Lexer lexer_;
};

std::optional<FieldType> parse_field_type(Parser& p) {
    std::optional<std::string> name = p.expect_ident("a type");
    if (!name)
        return std::nullopt;
    if (*name == "bool")
        return FieldType::boolean();
    if (*name == "u64")
        return FieldType::u64();
    if (*name == "address")
        return FieldType::address();
    return FieldType::record(*name);
}

std::optional<StructDecl> parse_struct_decl(Parser& p) {
    StructDecl decl;
    decl.is_resource = p.eat_ident("resource");
    if (!decl.is_resource && !p.eat_ident("record"))
        return std::nullopt;
    std::optional<std::string> name = p.expect_ident("a struct name");
    if (!name)
        return std::nullopt;
    decl.name = *name;
    if (!p.expect_punct('{'))
        return std::nullopt;
    for (;;) {
        std::optional<std::string> field = p.expect_ident("a field name");
        if (!field)
            return std::nullopt;
        if (!p.expect_punct(':'))
            return std::nullopt;
        std::optional<FieldType> type = parse_field_type(p);
        if (!type)
            return std::nullopt;
        decl.fields.push_back({*field, *type});
        if (p.at_punct(',')) {
            p.lexer_.take();
            continue;
        }
        break;
    }
    if (!p.expect_punct('}'))
        return std::nullopt;
    return decl;
}

std::vector<StructDecl> parse_struct_decls(Parser& p) {
    std::vector<StructDecl> decls;
    while (p.at_ident("resource") || p.at_ident("record")) {
        std::optional<StructDecl> decl = parse_struct_decl(p);
        if (!decl)
            break;
        decls.push_back(std::move(*decl));
    }
    return decls;
}

struct PendingBranch {
    std::size_t pc;
    std::string label;
    Token at;
};

void parse_code_block(Parser& p, Program& program) {
    if (!p.eat_ident("code")) {
        p.error(p.lexer_.peek(), "expected 'code'");
        return;
    }
    if (!p.expect_punct('{'))
        return;
    std::map<std::string, std::uint64_t> labels;
    std::vector<PendingBranch> pending;
    while (!p.at_punct('}')) {
        Token tok = p.lexer_.peek();
        if (tok.kind == Token::Kind::End) {
            p.error(tok, "unterminated code block");
            return;
        }
        if (tok.kind != Token::Kind::Ident) {
            p.error(tok, "expected an instruction or label");
            return;
        }
        std::string word = p.lexer_.take().text;
        // A word followed by ':' is a label, even when it collides with a
        // mnemonic name.
        if (p.at_punct(':')) {
            p.lexer_.take();
            if (!labels.emplace(word, program.code.size()).second)
                p.error(tok, "duplicate label '" + word + "'");
            continue;
        }
        if (std::optional<OpKind> k = op_kind_from_name(word)) {
            program.code.push_back(Instruction::stack_op(*k));
            continue;
        }
        if (word == "ReadRef") {
            program.code.push_back(Instruction::read_ref());
            continue;
        }
        if (word == "WriteRef") {
            program.code.push_back(Instruction::write_ref());
            continue;
        }
        if (word == "FreezeRef") {
            program.code.push_back(Instruction::freeze_ref());
            continue;
        }
        if (word == "Pop") {
            program.code.push_back(Instruction::pop());
            continue;
        }
        if (word == "LoadConst") {
            Token lit = p.lexer_.peek();
            if (lit.kind == Token::Kind::Number) {
                p.lexer_.take();
                program.code.push_back(Instruction::load_const(prim_u64(lit.number)));
            } else if (lit.kind == Token::Kind::AddressLit) {
                p.lexer_.take();
                program.code.push_back(
                    Instruction::load_const(prim_address(*Address::parse(lit.text))));
            } else if (lit.kind == Token::Kind::Ident &&
                       (lit.text == "true" || lit.text == "false")) {
                p.lexer_.take();
                program.code.push_back(Instruction::load_const(prim_bool(lit.text == "true")));
            } else {
                p.error(lit, "expected a literal after LoadConst");
                return;
            }
            continue;
        }
        if (word == "Branch" || word == "Jump") {
            // Jump desugars to an unconditional transfer: LoadConst true; Branch.
            if (word == "Jump")
                program.code.push_back(Instruction::load_const(prim_bool(true)));
            Token target = p.lexer_.peek();
            if (target.kind == Token::Kind::Number) {
                p.lexer_.take();
                program.code.push_back(Instruction::branch(target.number));
            } else if (target.kind == Token::Kind::Ident) {
                p.lexer_.take();
                pending.push_back({program.code.size(), target.text, target});
                program.code.push_back(Instruction::branch(0));
            } else {
                p.error(target, "expected a label or instruction index");
                return;
            }
            continue;
        }
        if (word == "MvLoc" || word == "CpLoc" || word == "StLoc" || word == "BorrowLoc" ||
            word == "Pack" || word == "Unpack" || word == "BorrowField" || word == "MoveTo" ||
            word == "MoveFrom" || word == "BorrowGlobal" || word == "Exists") {
            std::optional<std::string> operand = p.expect_ident("an operand");
            if (!operand)
                return;
            Instruction instr;
            if (word == "MvLoc") instr = Instruction::mv_loc(*operand);
            else if (word == "CpLoc") instr = Instruction::cp_loc(*operand);
            else if (word == "StLoc") instr = Instruction::st_loc(*operand);
            else if (word == "BorrowLoc") instr = Instruction::borrow_loc(*operand);
            else if (word == "Pack") instr = Instruction::pack(*operand);
            else if (word == "Unpack") instr = Instruction::unpack(*operand);
            else if (word == "BorrowField") instr = Instruction::borrow_field(*operand);
            else if (word == "MoveTo") instr = Instruction::move_to(*operand);
            else if (word == "MoveFrom") instr = Instruction::move_from(*operand);
            else if (word == "BorrowGlobal") instr = Instruction::borrow_global(*operand);
            else instr = Instruction::exists(*operand);
            program.code.push_back(std::move(instr));
            continue;
        }
        p.error(tok, "unknown mnemonic '" + word + "'");
        return;
    }
    p.expect_punct('}');
    for (const PendingBranch& br : pending) {
        auto it = labels.find(br.label);
        if (it == labels.end())
            p.error(br.at, "unresolved label '" + br.label + "'");
        else
            program.code[br.pc].target = it->second;
    }
}

}  // namespace

ParseResult<Program> parse_program(std::string_view text) {
    ParseResult<Program> result;
    Parser p(text);
    Program program;
    program.structs = StructTable(parse_struct_decls(p));
    if (p.eat_ident("locals")) {
        for (;;) {
            std::optional<std::string> name = p.expect_ident("a local name");
            if (!name)
                break;
            program.locals.push_back(*name);
            if (p.at_punct(',')) {
                p.lexer_.take();
                continue;
            }
            break;
        }
    }
    if (!p.failed())
        parse_code_block(p, program);
    if (!p.failed() && p.lexer_.peek().kind != Token::Kind::End)
        p.error(p.lexer_.peek(), "trailing input after code block");
    result.diagnostics = std::move(p.diagnostics);
    if (!result.diagnostics.empty())
        return result;
    std::vector<Diagnostic> validation = validate_program(program);
    if (!validation.empty()) {
        result.diagnostics = std::move(validation);
        return result;
    }
    result.value = std::move(program);
    return result;
}

namespace {

/// Parses one literal, checks it against the expected type, and assigns
/// fresh resource tags in pre-order (declaration order within records).
std::optional<TaggedValue> parse_typed_literal(Parser& p, const StructTable& decls,
                                               const FieldType& expected, GlobalState& st) {
    Token tok = p.lexer_.peek();
    switch (expected.kind) {
    case FieldType::Kind::Bool:
        if (tok.kind == Token::Kind::Ident && (tok.text == "true" || tok.text == "false")) {
            p.lexer_.take();
            return make_primitive(prim_bool(tok.text == "true"));
        }
        p.error(tok, "expected a boolean literal");
        return std::nullopt;
    case FieldType::Kind::U64:
        if (tok.kind == Token::Kind::Number) {
            p.lexer_.take();
            return make_primitive(prim_u64(tok.number));
        }
        p.error(tok, "expected an integer literal");
        return std::nullopt;
    case FieldType::Kind::Address:
        if (tok.kind == Token::Kind::AddressLit) {
            p.lexer_.take();
            return make_primitive(prim_address(*Address::parse(tok.text)));
        }
        p.error(tok, "expected an address literal");
        return std::nullopt;
    case FieldType::Kind::Struct: break;
    }

    if (tok.kind != Token::Kind::Ident) {
        p.error(tok, "expected a record literal of type " + expected.struct_name);
        return std::nullopt;
    }
    std::string type_name = p.lexer_.take().text;
    if (type_name != expected.struct_name) {
        p.error(tok, "expected a '" + expected.struct_name + "' literal, found '" + type_name +
                         "'");
        return std::nullopt;
    }
    const StructDecl* decl = decls.find(type_name);
    if (decl == nullptr) {
        p.error(tok, "unknown struct '" + type_name + "'");
        return std::nullopt;
    }
    if (!p.expect_punct('{'))
        return std::nullopt;

    Tag tag = decl->is_resource ? Tag::resource(st.fresh_tag()) : Tag::unrestricted();

    std::map<std::string, Token> field_starts;
    std::map<std::string, std::size_t> positions;
    std::vector<std::pair<FieldName, TaggedValue>> parsed;
    for (;;) {
        Token ftok = p.lexer_.peek();
        std::optional<std::string> fname = p.expect_ident("a field name");
        if (!fname)
            return std::nullopt;
        const FieldDecl* fdecl = decl->field(*fname);
        if (fdecl == nullptr) {
            p.error(ftok, "struct '" + type_name + "' has no field '" + *fname + "'");
            return std::nullopt;
        }
        if (positions.count(*fname) != 0) {
            p.error(ftok, "duplicate field '" + *fname + "'");
            return std::nullopt;
        }
        if (!p.expect_punct(':'))
            return std::nullopt;
        std::optional<TaggedValue> value = parse_typed_literal(p, decls, fdecl->type, st);
        if (!value)
            return std::nullopt;
        positions.emplace(*fname, parsed.size());
        parsed.emplace_back(*fname, std::move(*value));
        if (p.at_punct(',')) {
            p.lexer_.take();
            continue;
        }
        break;
    }
    if (!p.expect_punct('}'))
        return std::nullopt;
    if (parsed.size() != decl->fields.size()) {
        p.error(tok, "literal for '" + type_name + "' must list every field");
        return std::nullopt;
    }
    // Store fields in declaration order regardless of literal order.
    std::vector<std::pair<FieldName, TaggedValue>> ordered;
    ordered.reserve(parsed.size());
    for (const FieldDecl& f : decl->fields)
        ordered.push_back(std::move(parsed[positions.at(f.name)]));
    return make_record(decl->name, std::move(ordered), tag);
}

}  // namespace

ParseResult<GlobalState> parse_state(std::string_view text, const StructTable& decls) {
    ParseResult<GlobalState> result;
    Parser p(text);
    GlobalState st;
    while (p.lexer_.peek().kind != Token::Kind::End) {
        Token start = p.lexer_.peek();
        if (!p.eat_ident("publish")) {
            p.error(start, "expected 'publish'");
            break;
        }
        Token addr_tok = p.lexer_.peek();
        if (addr_tok.kind != Token::Kind::AddressLit) {
            p.error(addr_tok, "expected an address");
            break;
        }
        p.lexer_.take();
        Address addr = *Address::parse(addr_tok.text);
        Token type_tok = p.lexer_.peek();
        std::optional<std::string> type_name = p.expect_ident("a resource type name");
        if (!type_name)
            break;
        const StructDecl* decl = decls.find(*type_name);
        if (decl == nullptr) {
            p.error(type_tok, "unknown struct '" + *type_name + "'");
            break;
        }
        if (!decl->is_resource) {
            p.error(type_tok, "only resources can be published; '" + *type_name +
                                  "' is not a resource");
            break;
        }
        GlobalResourceId id{addr, *type_name};
        if (st.globals.count(id) != 0) {
            p.error(start, "duplicate publication of " + addr.render() + "." + *type_name);
            break;
        }
        std::optional<TaggedValue> value =
            parse_typed_literal(p, decls, FieldType::record(*type_name), st);
        if (!value)
            break;
        Location c = st.fresh_location();
        st.memory.emplace(c, std::move(*value));
        st.globals.emplace(std::move(id), c);
    }
    result.diagnostics = std::move(p.diagnostics);
    if (result.diagnostics.empty())
        result.value = std::move(st);
    return result;
}

std::optional<std::string> serialize_state(const GlobalState& st) {
    if (!st.locals.empty() || !st.stack.empty())
        return std::nullopt;
    std::string out;
    for (const auto& [id, c] : st.globals) {
        auto mem = st.memory.find(c);
        if (mem == st.memory.end())
            return std::nullopt;
        out += "publish ";
        out += id.address.render();
        out += ' ';
        out += id.type_name;
        out += ' ';
        out += render_literal(mem->second);
        out += '\n';
    }
    return out;
}

std::string render_struct_table(const StructTable& table) {
    std::string out;
    for (const StructDecl& decl : table.decls()) {
        out += decl.is_resource ? "resource " : "record ";
        out += decl.name;
        out += " { ";
        bool first = true;
        for (const FieldDecl& f : decl.fields) {
            if (!first)
                out += ", ";
            first = false;
            out += f.name;
            out += ": ";
            out += render_field_type(f.type);
        }
        out += " }\n";
    }
    return out;
}

ParseResult<StructTable> parse_struct_table(std::string_view text) {
    ParseResult<StructTable> result;
    Parser p(text);
    StructTable table(parse_struct_decls(p));
    if (!p.failed() && p.lexer_.peek().kind != Token::Kind::End)
        p.error(p.lexer_.peek(), "trailing input after struct declarations");
    result.diagnostics = std::move(p.diagnostics);
    if (!result.diagnostics.empty())
        return result;
    std::vector<Diagnostic> validation = validate_struct_table(table);
    if (!validation.empty()) {
        result.diagnostics = std::move(validation);
        return result;
    }
    result.value = std::move(table);
    return result;
}

std::string render_program(const Program& p) {
    std::string out = render_struct_table(p.structs);
    if (!p.locals.empty()) {
        out += "locals ";
        bool first = true;
        for (const std::string& x : p.locals) {
            if (!first)
                out += ", ";
            first = false;
            out += x;
        }
        out += '\n';
    }
    std::set<std::uint64_t> targets;
    for (const Instruction& instr : p.code) {
        if (instr.opcode == Opcode::Branch)
            targets.insert(instr.target);
    }
    out += "code {\n";
    for (std::size_t pc = 0; pc <= p.code.size(); ++pc) {
        if (targets.count(pc) != 0)
            out += "L" + std::to_string(pc) + ":\n";
        if (pc == p.code.size())
            break;
        const Instruction& instr = p.code[pc];
        out += "  ";
        if (instr.opcode == Opcode::Branch)
            out += "Branch L" + std::to_string(instr.target);
        else
            out += render_instruction(instr);
        out += '\n';
    }
    out += "}\n";
    return out;
}

}  // namespace rvm
