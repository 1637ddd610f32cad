#!/usr/bin/env python3
"""Toy test runner for pipeline tests: emulates a Java-ish method's suite.

Reads one source file, translates the small Java subset used by the test
fixtures into Python, runs a hard-coded unit suite for the method it finds,
and prints one "<test-id> PASS|FAIL" line per test.  With --check it only
attempts the translation and exits nonzero on failure, which lets the same
script stand in for a compiler.

The translation is deliberately literal: a mutated source line changes the
emulated behavior exactly as the text says, so mutants genuinely kill (or
survive) tests.  Sources that no longer fit the subset count as failing
every test (or as uncompilable under --check).
"""

import re
import sys

HEADER = re.compile(
    r"^\s*(?:public\s+|private\s+|protected\s+)?(?:static\s+)?"
    r"(?:int|long|double|boolean)\s+(\w+)\s*\(([^)]*)\)\s*\{\s*$")
FOR = re.compile(r"^for \(int (\w+) = (.+?); \1 (<=|<) (.+?); \1\+\+\) \{$")
WHILE = re.compile(r"^while \((.+)\) \{$")
IF = re.compile(r"^if \((.+)\) \{$")
ELSE_IF = re.compile(r"^\} else if \((.+)\) \{$")
ELSE = re.compile(r"^\} else \{$")
DECL = re.compile(r"^(?:int|long|double|boolean) (\w+) = (.+);$")
AUG = re.compile(r"^(\w+) (\+|-|\*|%)= (.+);$")
ASSIGN = re.compile(r"^(\w+) = (.+);$")
RETURN = re.compile(r"^return (.+);$")
CLOSE = re.compile(r"^\}$")

SUITES = {
    "clamp": [
        ("t_small", (3,), 3),
        ("t_at_limit", (10,), 10),
        ("t_above", (15,), 10),
        ("t_big", (100,), 10),
    ],
    "sumTo": [
        ("t_zero", (0,), 0),
        ("t_one", (1,), 1),
        ("t_five", (5,), 15),
        ("t_neg", (-3,), 0),
    ],
}


def expr(java: str) -> str:
    text = java.replace("&&", " and ").replace("||", " or ")
    text = re.sub(r"!(?!=)", " not ", text)
    text = re.sub(r"\btrue\b", "True", text)
    text = re.sub(r"\bfalse\b", "False", text)
    return text


def transpile(source: str) -> tuple[str, str]:
    """Translate the Java subset to Python; returns (method name, code)."""
    out = []
    depth = 0
    name = None
    for raw in source.split("\n"):
        line = raw.strip()
        if not line or line.startswith("//"):
            continue
        header = HEADER.match(raw)
        if header and depth == 0:
            name = header.group(1)
            params = [p.split()[-1] for p in header.group(2).split(",")
                      if p.strip()]
            out.append(f"def {name}({', '.join(params)}):")
            depth = 1
            continue
        if depth == 0:
            raise ValueError(f"statement outside a method: {line!r}")
        indent = "    " * depth
        match = FOR.match(line)
        if match:
            var, start, op, stop = match.groups()
            stop_expr = expr(stop) if op == "<" else f"({expr(stop)}) + 1"
            out.append(f"{indent}for {var} in range({expr(start)}, {stop_expr}):")
            depth += 1
            continue
        match = WHILE.match(line)
        if match:
            out.append(f"{indent}while {expr(match.group(1))}:")
            depth += 1
            continue
        match = IF.match(line)
        if match:
            out.append(f"{indent}if {expr(match.group(1))}:")
            depth += 1
            continue
        match = ELSE_IF.match(line)
        if match:
            dedent = "    " * (depth - 1)
            out.append(f"{dedent}elif {expr(match.group(1))}:")
            continue
        if ELSE.match(line):
            dedent = "    " * (depth - 1)
            out.append(f"{dedent}else:")
            continue
        if CLOSE.match(line):
            depth -= 1
            if depth < 1 and name is None:
                raise ValueError("unbalanced braces")
            continue
        match = DECL.match(line) or AUG.match(line) or ASSIGN.match(line)
        if match:
            groups = match.groups()
            if len(groups) == 3:
                out.append(f"{indent}{groups[0]} {groups[1]}= {expr(groups[2])}")
            else:
                out.append(f"{indent}{groups[0]} = {expr(groups[1])}")
            continue
        match = RETURN.match(line)
        if match:
            out.append(f"{indent}return {expr(match.group(1))}")
            continue
        raise ValueError(f"unsupported statement: {line!r}")
    if name is None:
        raise ValueError("no method header found")
    code = "\n".join(out)
    compile(code, "<toy>", "exec")
    return name, code


def build(source: str):
    name, code = transpile(source)
    namespace: dict = {}
    exec(code, namespace)  # noqa: S102 (test fixture, controlled input)
    return name, namespace[name]


def main(argv: list[str]) -> int:
    check_only = "--check" in argv
    paths = [a for a in argv if not a.startswith("-")]
    if not paths:
        print("usage: toyrunner.py [--check] <source>", file=sys.stderr)
        return 2
    with open(paths[0], encoding="utf-8") as handle:
        source = handle.read()
    try:
        name, fn = build(source)
    except Exception as error:  # noqa: BLE001 (any break means uncompilable)
        if check_only:
            print(f"toy compile error: {error}", file=sys.stderr)
            return 1
        for suite_name, tests in SUITES.items():
            if suite_name in source:
                for test_id, _, _ in tests:
                    print(test_id, "FAIL")
                return 0
        print(f"unrecognized source: {error}", file=sys.stderr)
        return 1
    if check_only:
        return 0
    tests = SUITES.get(name)
    if tests is None:
        print(f"no suite for method {name}", file=sys.stderr)
        return 1
    for test_id, args, expected in tests:
        try:
            got = fn(*args)
        except Exception:  # noqa: BLE001 (a crash is just a failing test)
            print(test_id, "FAIL")
            continue
        print(test_id, "PASS" if got == expected else "FAIL")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
