"""Logic-based chunking of Java-style methods.

A method body is partitioned into chunks by claiming control-flow
constructs bottom-up: the if/for/while/do-while/try statements are visited
in descending order of start line (innermost first on ties), each claims
its own not-yet-claimed lines plus the run of local-variable declarations
immediately above it in the same block, and whatever remains is split into
maximal runs of consecutive lines.  Every physical line of the method lands
in exactly one chunk.

Parsing is done by a purpose-built lexer and statement-level recursive
descent parser that understands C-family block structure (blocks, the five
control constructs above, switch/case, labels, local classes) without
building expression trees.  Anonymous-class and lambda bodies are consumed
as opaque expression text, so control flow inside them is not chunked
separately.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

SUPPORTED_GRAMMARS = ("java",)

TARGET_KINDS = ("if", "for", "while", "do_while", "try")

_KEYWORDS = frozenset("""
    abstract assert boolean break byte case catch char class const continue
    default do double else enum extends final finally float for goto if
    implements import instanceof int interface long native new package
    private protected public return short static strictfp super switch
    synchronized this throw throws transient try void volatile while
""".split())

_PRIMITIVES = frozenset(
    ["boolean", "byte", "char", "short", "int", "long", "float", "double"])

_MULTI_OPS = ("::", "->")


class ChunkerError(Exception):
    """Base error for the chunking pipeline."""


class UnsupportedGrammarError(ChunkerError):
    """Raised for grammar ids other than the supported ones."""


class MethodSyntaxError(ChunkerError):
    """Raised when the method text cannot be parsed; carries a line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Token:
    kind: str  # ident | keyword | number | literal | punct
    text: str
    line: int


@dataclass
class Stmt:
    """One parsed statement with its physical line span and nesting depth."""

    kind: str
    start_line: int
    end_line: int
    depth: int
    children: list["Stmt"] = field(default_factory=list)
    parent: "Stmt | None" = field(default=None, repr=False, compare=False)

    def lines(self) -> set[int]:
        return set(range(self.start_line, self.end_line + 1))

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class MethodAst:
    root: Stmt

    def statements(self) -> list[Stmt]:
        return list(self.root.walk())


@dataclass
class FocalMethod:
    """A parsed method: source text, its line range, and the statement tree."""

    source: str
    start_line: int
    lines: tuple[int, ...]
    ast: MethodAst

    def line_text(self, line_number: int) -> str:
        return self.source.splitlines()[line_number - self.start_line]


@dataclass(frozen=True)
class CodeChunk:
    """One chunk: a set of physical lines, their text, and the chunk kind."""

    line_numbers: tuple[int, ...]
    text: str
    kind: str  # control_flow | segment

    def __post_init__(self):
        if not self.line_numbers:
            raise ChunkerError("a chunk cannot be empty")
        if list(self.line_numbers) != sorted(set(self.line_numbers)):
            raise ChunkerError("chunk line numbers must be sorted and unique")


def _lex(source: str) -> list[Token]:
    """Tokenize method source, skipping whitespace and comments."""
    tokens: list[Token] = []
    line = 1
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            i += 1
            continue
        if ch in " \t\r\f":
            i += 1
            continue
        if ch == "/" and i + 1 < n and source[i + 1] == "/":
            while i < n and source[i] != "\n":
                i += 1
            continue
        if ch == "/" and i + 1 < n and source[i + 1] == "*":
            start_line = line
            i += 2
            while i < n and not (source[i] == "*" and i + 1 < n and source[i + 1] == "/"):
                if source[i] == "\n":
                    line += 1
                i += 1
            if i >= n:
                raise MethodSyntaxError("unterminated block comment", start_line)
            i += 2
            continue
        if ch in "\"'":
            quote = ch
            start_line = line
            text = [ch]
            i += 1
            while i < n:
                current = source[i]
                text.append(current)
                if current == "\\" and i + 1 < n:
                    text.append(source[i + 1])
                    i += 2
                    continue
                if current == "\n":
                    line += 1
                if current == quote:
                    i += 1
                    break
                i += 1
            else:
                raise MethodSyntaxError("unterminated literal", start_line)
            if text[-1] != quote or len(text) < 2:
                raise MethodSyntaxError("unterminated literal", start_line)
            tokens.append(Token("literal", "".join(text), start_line))
            continue
        if ch.isdigit():
            start = i
            while i < n and (source[i].isalnum() or source[i] in "._xXbBlLfFdD"):
                i += 1
            tokens.append(Token("number", source[start:i], line))
            continue
        if ch.isalpha() or ch in "_$":
            start = i
            while i < n and (source[i].isalnum() or source[i] in "_$"):
                i += 1
            word = source[start:i]
            kind = "keyword" if word in _KEYWORDS else "ident"
            tokens.append(Token(kind, word, line))
            continue
        matched = False
        for op in _MULTI_OPS:
            if source.startswith(op, i):
                tokens.append(Token("punct", op, line))
                i += len(op)
                matched = True
                break
        if not matched:
            tokens.append(Token("punct", ch, line))
            i += 1
    return tokens


_OPENERS = {"(": ")", "[": "]", "{": "}"}
_CLOSERS = {")", "]", "}"}


class _Parser:
    """Statement-level recursive descent over the token stream."""

    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self, offset: int = 0) -> Token | None:
        idx = self.pos + offset
        return self.tokens[idx] if idx < len(self.tokens) else None

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def at_punct(self, text: str, offset: int = 0) -> bool:
        token = self.peek(offset)
        return token is not None and token.kind == "punct" and token.text == text

    def at_keyword(self, text: str, offset: int = 0) -> bool:
        token = self.peek(offset)
        return token is not None and token.kind == "keyword" and token.text == text

    def error(self, message: str, token: Token | None = None) -> MethodSyntaxError:
        if token is None:
            token = self.peek() or (self.tokens[-1] if self.tokens else Token("punct", "", 1))
        return MethodSyntaxError(message, token.line)

    def last_line(self) -> int:
        return self.tokens[self.pos - 1].line

    # --- bracket helpers -------------------------------------------------

    def consume_parens(self) -> None:
        """Consume a balanced (...) group, tolerating nested brackets."""
        opener = self.peek()
        if opener is None or opener.text != "(":
            raise self.error("expected '('")
        depth = 0
        while True:
            token = self.peek()
            if token is None:
                raise MethodSyntaxError("unclosed '('", opener.line)
            self.advance()
            if token.kind == "punct":
                if token.text in _OPENERS:
                    depth += 1
                elif token.text in _CLOSERS:
                    depth -= 1
                    if depth == 0:
                        if token.text != ")":
                            raise MethodSyntaxError("mismatched bracket", token.line)
                        return
                    if depth < 0:
                        raise MethodSyntaxError("mismatched bracket", token.line)

    def consume_to_semicolon(self) -> list[Token]:
        """Consume tokens through the next top-level ';' and return them."""
        consumed: list[Token] = []
        depth = 0
        while True:
            token = self.peek()
            if token is None:
                raise MethodSyntaxError(
                    "statement missing ';'", consumed[-1].line if consumed else 1)
            if token.kind == "punct":
                if token.text in _OPENERS:
                    depth += 1
                elif token.text in _CLOSERS:
                    if depth == 0:
                        raise self.error("statement missing ';'", token)
                    depth -= 1
                elif token.text == ";" and depth == 0:
                    self.advance()
                    return consumed
            consumed.append(self.advance())

    # --- statement parsing -----------------------------------------------

    def parse_block(self, depth: int) -> Stmt:
        opener = self.peek()
        if opener is None or opener.text != "{":
            raise self.error("expected '{'")
        self.advance()
        children: list[Stmt] = []
        while True:
            token = self.peek()
            if token is None:
                raise MethodSyntaxError("unclosed '{'", opener.line)
            if token.kind == "punct" and token.text == "}":
                closer = self.advance()
                block = Stmt("block", opener.line, closer.line, depth, children)
                for child in children:
                    child.parent = block
                return block
            children.append(self.parse_statement(depth + 1))

    def parse_statement(self, depth: int) -> Stmt:
        token = self.peek()
        if token is None:
            raise MethodSyntaxError("unexpected end of input", self.last_line())
        if token.kind == "punct":
            if token.text == "{":
                return self.parse_block(depth)
            if token.text == ";":
                self.advance()
                return Stmt("empty", token.line, token.line, depth)
            if token.text in _CLOSERS:
                raise self.error(f"unexpected '{token.text}'", token)
        if token.kind == "keyword":
            handler = {
                "if": self.parse_if,
                "for": self.parse_for,
                "while": self.parse_while,
                "do": self.parse_do,
                "try": self.parse_try,
                "switch": self.parse_switch,
                "synchronized": self.parse_synchronized,
            }.get(token.text)
            if handler is not None:
                return handler(depth)
            if token.text in ("return", "throw", "break", "continue", "assert"):
                self.advance()
                self.consume_to_semicolon()
                return Stmt("simple", token.line, self.last_line(), depth)
            if token.text in ("class", "interface", "enum"):
                return self.parse_local_type(depth)
        if (token.kind == "ident" and self.at_punct(":", 1)
                and not self.at_punct("::", 1)):
            self.advance()
            self.advance()
            inner = self.parse_statement(depth + 1)
            label = Stmt("label", token.line, inner.end_line, depth, [inner])
            inner.parent = label
            return label
        return self.parse_generic(depth)

    def parse_if(self, depth: int) -> Stmt:
        start = self.advance()
        self.consume_parens()
        then_branch = self.parse_statement(depth + 1)
        children = [then_branch]
        end_line = then_branch.end_line
        if self.at_keyword("else"):
            self.advance()
            else_branch = self.parse_statement(depth + 1)
            children.append(else_branch)
            end_line = else_branch.end_line
        stmt = Stmt("if", start.line, end_line, depth, children)
        for child in children:
            child.parent = stmt
        return stmt

    def parse_for(self, depth: int) -> Stmt:
        start = self.advance()
        self.consume_parens()
        body = self.parse_statement(depth + 1)
        stmt = Stmt("for", start.line, body.end_line, depth, [body])
        body.parent = stmt
        return stmt

    def parse_while(self, depth: int) -> Stmt:
        start = self.advance()
        self.consume_parens()
        body = self.parse_statement(depth + 1)
        stmt = Stmt("while", start.line, body.end_line, depth, [body])
        body.parent = stmt
        return stmt

    def parse_do(self, depth: int) -> Stmt:
        start = self.advance()
        body = self.parse_statement(depth + 1)
        if not self.at_keyword("while"):
            raise self.error("expected 'while' after do body")
        self.advance()
        self.consume_parens()
        if not self.at_punct(";"):
            raise self.error("expected ';' after do-while")
        closer = self.advance()
        stmt = Stmt("do_while", start.line, closer.line, depth, [body])
        body.parent = stmt
        return stmt

    def parse_try(self, depth: int) -> Stmt:
        start = self.advance()
        if self.at_punct("("):
            self.consume_parens()
        children = [self.parse_block(depth + 1)]
        while self.at_keyword("catch"):
            self.advance()
            self.consume_parens()
            children.append(self.parse_block(depth + 1))
        if self.at_keyword("finally"):
            self.advance()
            children.append(self.parse_block(depth + 1))
        stmt = Stmt("try", start.line, children[-1].end_line, depth, children)
        for child in children:
            child.parent = stmt
        return stmt

    def parse_switch(self, depth: int) -> Stmt:
        start = self.advance()
        self.consume_parens()
        opener = self.peek()
        if opener is None or opener.text != "{":
            raise self.error("expected '{' after switch")
        self.advance()
        children: list[Stmt] = []
        while True:
            token = self.peek()
            if token is None:
                raise MethodSyntaxError("unclosed '{'", opener.line)
            if token.kind == "punct" and token.text == "}":
                closer = self.advance()
                stmt = Stmt("switch", start.line, closer.line, depth, children)
                for child in children:
                    child.parent = stmt
                return stmt
            if token.kind == "keyword" and token.text in ("case", "default"):
                self.consume_case_label()
                continue
            children.append(self.parse_statement(depth + 1))

    def consume_case_label(self) -> None:
        """Consume 'case <expr>:' / 'default:' (or the arrow form's label)."""
        label = self.advance()
        depth = 0
        while True:
            token = self.peek()
            if token is None:
                raise MethodSyntaxError("unterminated case label", label.line)
            if token.kind == "punct" and depth == 0 and token.text in (":", "->"):
                self.advance()
                return
            if token.kind == "punct":
                if token.text in _OPENERS:
                    depth += 1
                elif token.text in _CLOSERS:
                    depth -= 1
            self.advance()

    def parse_synchronized(self, depth: int) -> Stmt:
        start = self.advance()
        if self.at_punct("("):
            self.consume_parens()
        body = self.parse_statement(depth + 1)
        stmt = Stmt("synchronized", start.line, body.end_line, depth, [body])
        body.parent = stmt
        return stmt

    def parse_local_type(self, depth: int) -> Stmt:
        start = self.advance()
        while not self.at_punct("{"):
            if self.peek() is None:
                raise MethodSyntaxError("expected '{' in type declaration", start.line)
            self.advance()
        opener = self.peek()
        bracket_depth = 0
        while True:
            token = self.peek()
            if token is None:
                raise MethodSyntaxError("unclosed '{'", opener.line)
            self.advance()
            if token.kind == "punct":
                if token.text in _OPENERS:
                    bracket_depth += 1
                elif token.text in _CLOSERS:
                    bracket_depth -= 1
                    if bracket_depth == 0:
                        break
        return Stmt("local_type", start.line, self.last_line(), depth)

    def parse_generic(self, depth: int) -> Stmt:
        first = self.peek()
        tokens = self.consume_to_semicolon()
        kind = "decl" if _is_declaration(tokens) else "expr"
        return Stmt(kind, first.line, self.last_line(), depth)


def _is_declaration(tokens: list[Token]) -> bool:
    """Heuristic: does this statement declare a local variable?

    Matches [modifiers] Type [generics] [arrays] name followed by '=', ',',
    '[', or the statement end.  Types may be primitives, 'var', or dotted
    identifiers with balanced generic arguments.
    """
    j = 0

    def token(k: int) -> Token | None:
        return tokens[k] if k < len(tokens) else None

    while True:
        current = token(j)
        if current is None:
            return False
        if current.kind == "keyword" and current.text == "final":
            j += 1
            continue
        if current.kind == "punct" and current.text == "@":
            j += 1
            if token(j) is not None and token(j).kind in ("ident", "keyword"):
                j += 1
                if token(j) is not None and token(j).text == "(":
                    depth = 0
                    while token(j) is not None:
                        text = token(j).text
                        if text in _OPENERS:
                            depth += 1
                        elif text in _CLOSERS:
                            depth -= 1
                            if depth == 0:
                                j += 1
                                break
                        j += 1
                continue
            return False
        break

    current = token(j)
    if current is None:
        return False
    if current.kind == "keyword" and current.text in _PRIMITIVES:
        j += 1
    elif current.kind == "ident" and current.text not in ("yield",):
        j += 1
        while (token(j) is not None and token(j).text == "."
               and token(j + 1) is not None and token(j + 1).kind in ("ident", "keyword")):
            j += 2
        if token(j) is not None and token(j).text == "<":
            j = _consume_generic_args(tokens, j)
            if j < 0:
                return False
    else:
        return False

    while (token(j) is not None and token(j).text == "["
           and token(j + 1) is not None and token(j + 1).text == "]"):
        j += 2

    name = token(j)
    if name is None or name.kind != "ident":
        return False
    after = token(j + 1)
    if after is None:
        return True
    return after.kind == "punct" and after.text in ("=", ",", "[")


_GENERIC_INNER = frozenset([",", ".", "?", "&", "[", "]", "<", ">"])


def _consume_generic_args(tokens: list[Token], j: int) -> int:
    """Consume a balanced <...> type-argument group; -1 if it is not one."""
    depth = 0
    while j < len(tokens):
        text = tokens[j].text
        kind = tokens[j].kind
        if text == "<":
            depth += 1
        elif text == ">":
            depth -= 1
            if depth == 0:
                return j + 1
        elif kind == "ident" or text in _GENERIC_INNER:
            pass
        elif kind == "keyword" and (text in _PRIMITIVES or text in ("extends", "super")):
            pass
        else:
            return -1
        j += 1
    return -1


def parse_method(source: str, grammar: str = "java", start_line: int = 1) -> FocalMethod:
    """Parse one method's text into a FocalMethod.

    Args:
        source: the method text, signature through closing brace (trailing
            blank lines allowed and counted).
        grammar: grammar id; only "java" (C-family) is supported.
        start_line: 1-based line number of the method's first line, for
            methods embedded in a larger file.

    Returns:
        FocalMethod with the physical line range and statement tree.

    Raises:
        UnsupportedGrammarError: for unknown grammar ids.
        MethodSyntaxError: for unbalanced or unparsable method text, with
            the offending line number.
    """
    if grammar not in SUPPORTED_GRAMMARS:
        raise UnsupportedGrammarError(
            f"unsupported grammar {grammar!r}; supported: {SUPPORTED_GRAMMARS}")
    if not source or not source.strip():
        raise MethodSyntaxError("empty method text", start_line)
    tokens = _lex(source)
    if not tokens:
        raise MethodSyntaxError("no tokens in method text", start_line)

    parser = _Parser(tokens)
    paren_depth = 0
    body_index = None
    for idx, token in enumerate(tokens):
        if token.kind != "punct":
            continue
        if token.text == "(":
            paren_depth += 1
        elif token.text == ")":
            paren_depth -= 1
        elif token.text == "{" and paren_depth == 0:
            body_index = idx
            break
    if body_index is None:
        raise MethodSyntaxError("method body not found", tokens[-1].line)
    parser.pos = body_index
    root = parser.parse_block(depth=0)
    if parser.peek() is not None:
        raise parser.error("unexpected tokens after method body")

    n_lines = len(source.splitlines())
    offset = start_line - 1
    if offset:
        for stmt in root.walk():
            stmt.start_line += offset
            stmt.end_line += offset
    lines = tuple(range(start_line, start_line + n_lines))
    return FocalMethod(source=source, start_line=start_line, lines=lines,
                       ast=MethodAst(root=root))


def collect_target_nodes(method: FocalMethod) -> list[Stmt]:
    """Control-flow statements ordered by start line descending.

    Nodes sharing a start line are ordered by depth descending, so inner
    constructs are claimed before the outer ones that contain them.
    """
    nodes = [stmt for stmt in method.ast.root.walk() if stmt.kind in TARGET_KINDS]
    return sorted(nodes, key=lambda s: (s.start_line, s.depth), reverse=True)


def _preceding_declaration_lines(node: Stmt) -> set[int]:
    """Lines of the maximal decl-statement run immediately above node."""
    parent = node.parent
    if parent is None or parent.kind != "block":
        return set()
    index = parent.children.index(node)
    lines: set[int] = set()
    for sibling in reversed(parent.children[:index]):
        if sibling.kind != "decl":
            break
        lines |= sibling.lines()
    return lines


def preceding_decl_stmts(node: Stmt, remaining: set[int]) -> set[int]:
    """The declaration-run lines above ``node`` that are still unclaimed."""
    return _preceding_declaration_lines(node) & set(remaining)


def _consecutive_segments(lines: set[int]) -> list[tuple[int, ...]]:
    segments: list[tuple[int, ...]] = []
    run: list[int] = []
    for line in sorted(lines):
        if run and line != run[-1] + 1:
            segments.append(tuple(run))
            run = []
        run.append(line)
    if run:
        segments.append(tuple(run))
    return segments


def _chunk_text(method: FocalMethod, line_numbers: tuple[int, ...]) -> str:
    source_lines = method.source.splitlines()
    return "\n".join(source_lines[n - method.start_line] for n in line_numbers)


def chunk_method(method: FocalMethod) -> list[CodeChunk]:
    """Partition the method's physical lines into chunks.

    Control-flow chunks are claimed bottom-up (see module docstring); the
    leftovers become segment chunks of maximal consecutive lines.  The
    returned list is ordered by each chunk's minimum line number.

    The chunks partition method.lines exactly: every line appears in one
    and only one chunk.
    """
    remaining = set(method.lines)
    chunks: list[CodeChunk] = []
    for node in collect_target_nodes(method):
        node_lines = node.lines()
        claim = remaining & node_lines
        if not claim:
            continue
        declaration_lines = _preceding_declaration_lines(node)
        content = claim | (remaining & declaration_lines)
        chunks.append(CodeChunk(
            line_numbers=tuple(sorted(content)),
            text=_chunk_text(method, tuple(sorted(content))),
            kind="control_flow",
        ))
        remaining -= node_lines
        remaining -= declaration_lines
    for segment in _consecutive_segments(remaining):
        chunks.append(CodeChunk(
            line_numbers=segment,
            text=_chunk_text(method, segment),
            kind="segment",
        ))
    chunks.sort(key=lambda chunk: chunk.line_numbers[0])
    return chunks


def whole_method_chunk(method: FocalMethod) -> CodeChunk:
    """A single chunk spanning the entire method (chunking disabled)."""
    return CodeChunk(line_numbers=tuple(method.lines),
                     text=_chunk_text(method, tuple(method.lines)),
                     kind="segment")


def chunks_as_dicts(chunks: list[CodeChunk]) -> list[dict]:
    """JSON-friendly chunk listing (for the CLI and manifests)."""
    return [
        {
            "chunk_id": f"c{i:02d}",
            "kind": chunk.kind,
            "line_numbers": list(chunk.line_numbers),
            "text": chunk.text,
        }
        for i, chunk in enumerate(chunks)
    ]
