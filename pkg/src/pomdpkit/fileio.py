"""Text formats: `.pomdp` model files and `.alpha`-style policy files.

The model grammar is the widely circulated benchmark subset: preamble
keywords (discount, values, states, actions, observations), `start:`,
sparse `T:/O:/R:` triples, full-row and full-matrix blocks, `uniform` /
`identity` keywords, `*` wildcards, and `#` comments. The grammar is
token-based; newlines are ordinary whitespace. `start include:` and
`start exclude:` forms are rejected explicitly.

Entries assign (later entries overwrite earlier ones). Unspecified rewards
default to 0; a transition or observation row that is never specified is a
semantic error caught by model validation.
"""

from __future__ import annotations

import numpy as np

from .model import Pomdp, validate
from .valuefn import AlphaVector, ValueFunction

_KEYWORDS = {"discount", "values", "states", "actions", "observations", "start", "T", "O", "R"}


class ParseError(ValueError):
    """Syntax or semantic error with the source position when known."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", col {col})" if col is not None else ")")
        super().__init__(message + where)


class PolicyFormatError(ValueError):
    """Malformed policy file."""


class _Token:
    __slots__ = ("text", "line", "col")

    def __init__(self, text, line, col):
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text):
    tokens = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        col = 0
        for piece in line.split():
            col = line.index(piece, col)
            base = col
            col += len(piece)
            # split attached colons into their own tokens
            start = 0
            for k, ch in enumerate(piece):
                if ch == ":":
                    if k > start:
                        tokens.append(_Token(piece[start:k], lineno, base + start + 1))
                    tokens.append(_Token(":", lineno, base + k + 1))
                    start = k + 1
            if start < len(piece):
                tokens.append(_Token(piece[start:], lineno, base + start + 1))
    return tokens


class _Stream:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self, ahead=0):
        i = self.pos + ahead
        return self.tokens[i] if i < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else None
            raise ParseError("unexpected end of input", last.line if last else None)
        self.pos += 1
        return tok

    def expect(self, text):
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def at_statement(self):
        tok = self.peek()
        if tok is None:
            return False
        if tok.text in _KEYWORDS:
            after = self.peek(1)
            if after is not None and after.text == ":":
                return True
            if tok.text == "start" and after is not None and after.text in ("include", "exclude"):
                return True
        return False


def _as_float(tok):
    try:
        return float(tok.text)
    except ValueError:
        raise ParseError(f"expected a number, found {tok.text!r}", tok.line, tok.col) from None


def _is_number(tok):
    if tok is None:
        return False
    try:
        float(tok.text)
        return True
    except ValueError:
        return False


class _Parser:
    def __init__(self, text):
        self.stream = _Stream(_tokenize(text))
        self.discount = None
        self.values = "reward"
        self.state_names = None
        self.action_names = None
        self.obs_names = None
        self.n_states = self.n_actions = self.n_obs = None
        self.t = None
        self.z = None
        self.r_base = None
        self.r_fine = {}
        self.start = None

    # -- declarations ------------------------------------------------------

    def _read_name_list(self):
        names = []
        while not self.stream.at_statement() and self.stream.peek() is not None:
            names.append(self.stream.next().text)
        return names

    def _statement_follows(self, ahead):
        tok = self.stream.peek(ahead)
        if tok is None:
            return True
        after = self.stream.peek(ahead + 1)
        if tok.text in _KEYWORDS and after is not None:
            if after.text == ":":
                return True
            if tok.text == "start" and after.text in ("include", "exclude"):
                return True
        return False

    def _declare(self, what):
        tok = self.stream.peek()
        if tok is None:
            raise ParseError(f"missing {what} declaration")
        if _is_number(tok) and float(tok.text) == int(float(tok.text)):
            if self._statement_follows(1):
                self.stream.next()
                count = int(float(tok.text))
                if count < 1:
                    raise ParseError(f"{what} count must be positive", tok.line, tok.col)
                return count, None
        names = self._read_name_list()
        if not names:
            raise ParseError(f"empty {what} declaration", tok.line, tok.col)
        return len(names), tuple(names)

    def _require_sizes(self, tok):
        if self.n_states is None or self.n_actions is None or self.n_obs is None:
            raise ParseError(
                "states, actions, and observations must be declared before this entry",
                tok.line,
                tok.col,
            )
        if self.t is None:
            self.t = np.zeros((self.n_actions, self.n_states, self.n_states))
            self.z = np.zeros((self.n_actions, self.n_states, self.n_obs))
            self.r_base = np.zeros((self.n_states, self.n_actions))

    # -- field resolution --------------------------------------------------

    def _resolve(self, tok, names, count, what):
        if tok.text == "*":
            return range(count)
        if names and tok.text in names:
            return [names.index(tok.text)]
        try:
            idx = int(tok.text)
        except ValueError:
            raise ParseError(f"unknown {what} {tok.text!r}", tok.line, tok.col) from None
        if not 0 <= idx < count:
            raise ParseError(
                f"{what} index {idx} out of range [0, {count})", tok.line, tok.col
            )
        return [idx]

    def _action_ids(self, tok):
        return self._resolve(tok, self.action_names, self.n_actions, "action")

    def _state_ids(self, tok):
        return self._resolve(tok, self.state_names, self.n_states, "state")

    def _obs_ids(self, tok):
        return self._resolve(tok, self.obs_names, self.n_obs, "observation")

    # -- data blocks -------------------------------------------------------

    def _read_numbers(self, count):
        out = np.empty(count)
        for i in range(count):
            out[i] = _as_float(self.stream.next())
        return out

    def _read_row(self, width):
        tok = self.stream.peek()
        if tok is not None and tok.text == "uniform":
            self.stream.next()
            return np.full(width, 1.0 / width)
        return self._read_numbers(width)

    def _read_matrix(self, rows, cols, kind, identity_ok):
        tok = self.stream.peek()
        if tok is not None and tok.text == "uniform":
            self.stream.next()
            return np.full((rows, cols), 1.0 / cols)
        if tok is not None and tok.text == "identity":
            self.stream.next()
            if not identity_ok or rows != cols:
                raise ParseError(
                    f"identity is not valid for a {rows}x{cols} {kind} block",
                    tok.line,
                    tok.col,
                )
            return np.eye(rows)
        return self._read_numbers(rows * cols).reshape(rows, cols)

    # -- statements --------------------------------------------------------

    def _parse_table_fields(self, max_fields):
        """Colon-separated field tokens after the keyword (at most max_fields)."""
        fields = []
        while len(fields) < max_fields and self.stream.peek() is not None:
            if self.stream.peek().text != ":":
                break
            self.stream.next()
            fields.append(self.stream.next())
        if not fields:
            tok = self.stream.peek()
            raise ParseError(
                "expected ':' after table keyword",
                tok.line if tok else None,
                tok.col if tok else None,
            )
        return fields

    def _stmt_transition(self, key):
        self._require_sizes(key)
        fields = self._parse_table_fields(3)
        acts = self._action_ids(fields[0])
        if len(fields) == 1:
            for a in acts:
                self.t[a] = self._read_matrix(
                    self.n_states, self.n_states, "transition", identity_ok=True
                )
        elif len(fields) == 2:
            rows = self._state_ids(fields[1])
            row = self._read_row(self.n_states)
            for a in acts:
                for s in rows:
                    self.t[a, s, :] = row
        else:
            rows = self._state_ids(fields[1])
            cols = self._state_ids(fields[2])
            p = _as_float(self.stream.next()) if _is_number(self.stream.peek()) else 1.0
            self.t[np.ix_(acts, rows, cols)] = p

    def _stmt_observation(self, key):
        self._require_sizes(key)
        fields = self._parse_table_fields(3)
        acts = self._action_ids(fields[0])
        if len(fields) == 1:
            for a in acts:
                self.z[a] = self._read_matrix(
                    self.n_states, self.n_obs, "observation", identity_ok=True
                )
        elif len(fields) == 2:
            rows = self._state_ids(fields[1])
            row = self._read_row(self.n_obs)
            for a in acts:
                for s2 in rows:
                    self.z[a, s2, :] = row
        else:
            rows = self._state_ids(fields[1])
            cols = self._obs_ids(fields[2])
            p = _as_float(self.stream.next()) if _is_number(self.stream.peek()) else 1.0
            self.z[np.ix_(acts, rows, cols)] = p

    def _fine_table(self, a, s):
        key = (a, s)
        if key not in self.r_fine:
            self.r_fine[key] = np.full((self.n_states, self.n_obs), self.r_base[s, a])
        return self.r_fine[key]

    def _stmt_reward(self, key):
        self._require_sizes(key)
        fields = self._parse_table_fields(4)
        if len(fields) < 2:
            raise ParseError("reward entries need at least action and state", key.line, key.col)
        acts = self._action_ids(fields[0])
        starts = self._state_ids(fields[1])
        if len(fields) == 2:
            block = self._read_matrix(self.n_states, self.n_obs, "reward", identity_ok=False)
            for a in acts:
                for s in starts:
                    self.r_fine[(a, s)] = block.copy()
        elif len(fields) == 3:
            ends = self._state_ids(fields[2])
            row = self._read_numbers(self.n_obs)
            for a in acts:
                for s in starts:
                    table = self._fine_table(a, s)
                    table[ends, :] = row[None, :]
        else:
            ends = self._state_ids(fields[2])
            obs = self._obs_ids(fields[3])
            v = _as_float(self.stream.next())
            full = fields[2].text == "*" and fields[3].text == "*"
            for a in acts:
                for s in starts:
                    if full and (a, s) not in self.r_fine:
                        self.r_base[s, a] = v
                    else:
                        table = self._fine_table(a, s)
                        table[np.ix_(ends, obs)] = v

    def _stmt_start(self, key):
        nxt = self.stream.peek()
        if nxt is not None and nxt.text in ("include", "exclude"):
            raise ParseError(
                f"'start {nxt.text}:' lists are not supported by this grammar subset",
                nxt.line,
                nxt.col,
            )
        self.stream.expect(":")
        self._require_sizes(key)
        tok = self.stream.peek()
        if tok is None:
            raise ParseError("missing start distribution", key.line, key.col)
        if tok.text == "uniform":
            self.stream.next()
            self.start = np.full(self.n_states, 1.0 / self.n_states)
            return
        if not _is_number(tok) or (
            self.n_states > 1 and not _is_number(self.stream.peek(1))
        ):
            # single named or indexed state
            ids = self._state_ids(self.stream.next())
            if len(ids) != 1:
                raise ParseError("start state must be a single state", tok.line, tok.col)
            self.start = np.zeros(self.n_states)
            self.start[ids[0]] = 1.0
            return
        self.start = self._read_numbers(self.n_states)

    # -- driver ------------------------------------------------------------

    def parse(self) -> Pomdp:
        while self.stream.peek() is not None:
            tok = self.stream.next()
            if tok.text == "discount":
                self.stream.expect(":")
                self.discount = _as_float(self.stream.next())
            elif tok.text == "values":
                self.stream.expect(":")
                v = self.stream.next()
                if v.text not in ("reward", "cost"):
                    raise ParseError(f"values must be reward or cost, got {v.text!r}",
                                     v.line, v.col)
                self.values = v.text
            elif tok.text == "states":
                self.stream.expect(":")
                self.n_states, self.state_names = self._declare("states")
            elif tok.text == "actions":
                self.stream.expect(":")
                self.n_actions, self.action_names = self._declare("actions")
            elif tok.text == "observations":
                self.stream.expect(":")
                self.n_obs, self.obs_names = self._declare("observations")
            elif tok.text == "start":
                self._stmt_start(tok)
            elif tok.text == "T":
                self._stmt_transition(tok)
            elif tok.text == "O":
                self._stmt_observation(tok)
            elif tok.text == "R":
                self._stmt_reward(tok)
            else:
                raise ParseError(f"unexpected token {tok.text!r}", tok.line, tok.col)
        return self._assemble()

    def _assemble(self) -> Pomdp:
        if self.discount is None:
            raise ParseError("missing discount declaration")
        if self.t is None:
            if self.n_states is None or self.n_actions is None or self.n_obs is None:
                raise ParseError("missing states/actions/observations declarations")
            self._require_sizes(_Token("", None, None))
        reward = self.r_base.copy()
        for (a, s), table in self.r_fine.items():
            # collapse R(a,s,s',o) to its expectation under the model dynamics
            reward[s, a] = float(self.t[a, s] @ (self.z[a] * table).sum(axis=1))
        from_cost = self.values == "cost"
        if from_cost:
            reward = -reward
        start = self.start
        if start is None:
            start = np.full(self.n_states, 1.0 / self.n_states)
        model = Pomdp(
            transition=self.t,
            observation=self.z,
            reward=reward,
            discount=self.discount,
            initial_belief=start,
            state_names=self.state_names,
            action_names=self.action_names,
            obs_names=self.obs_names,
            from_cost=from_cost,
        )
        report = validate(model)
        if not report.ok:
            raise ParseError("invalid model: " + "; ".join(report.violations))
        return model


def parse_pomdp(text: str) -> Pomdp:
    """Parse model text; raises ParseError with position on any failure."""
    return _Parser(text).parse()


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def serialize_pomdp(model: Pomdp) -> str:
    """Emit a document that parses back to an entrywise-equal model.

    Output ordering is deterministic: preamble, start, then sparse T/O/R
    triples sorted by index.
    """
    lines = [f"discount: {_fmt(model.discount)}", "values: reward"]
    for key, names, count in (
        ("states", model.state_names, model.num_states),
        ("actions", model.action_names, model.num_actions),
        ("observations", model.obs_names, model.num_observations),
    ):
        lines.append(f"{key}: " + (" ".join(names) if names else str(count)))
    lines.append("start: " + " ".join(_fmt(p) for p in model.initial_belief))
    lines.append("")
    for a in range(model.num_actions):
        for s, s2 in zip(*np.nonzero(model.transition[a])):
            lines.append(f"T: {a} : {s} : {s2} {_fmt(model.transition[a, s, s2])}")
    lines.append("")
    for a in range(model.num_actions):
        for s2, o in zip(*np.nonzero(model.observation[a])):
            lines.append(f"O: {a} : {s2} : {o} {_fmt(model.observation[a, s2, o])}")
    lines.append("")
    for s, a in zip(*np.nonzero(model.reward)):
        lines.append(f"R: {a} : {s} : * : * {_fmt(model.reward[s, a])}")
    lines.append("")
    return "\n".join(lines)


def write_policy(vf: ValueFunction) -> str:
    """Serialize alpha vectors: a `states:` header, then one record per
    vector (action line, coefficient line, blank line). Continuous-action
    vectors store their parameter vector on a `params` line."""
    if len(vf) == 0:
        raise ValueError("refusing to write an empty value function")
    n = vf.vectors[0].coefficients.shape[0]
    lines = [f"states: {n}", ""]
    for v in vf.vectors:
        if isinstance(v.action, np.ndarray):
            lines.append("params " + " ".join(_fmt(x) for x in v.action))
        else:
            lines.append(str(int(v.action)))
        lines.append(" ".join(_fmt(x) for x in v.coefficients))
        lines.append("")
    return "\n".join(lines)


def read_policy(text: str) -> ValueFunction:
    """Parse a policy file; inverse of write_policy to the last bit."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise PolicyFormatError("empty policy file")
    pos = 0
    declared = None
    if lines[0].startswith("states:"):
        try:
            declared = int(lines[0].split(":", 1)[1])
        except ValueError:
            raise PolicyFormatError(f"bad states header: {lines[0]!r}") from None
        pos = 1
    vectors = []
    while pos < len(lines):
        head = lines[pos]
        if pos + 1 >= len(lines):
            raise PolicyFormatError(f"record starting {head!r} has no coefficient line")
        coeffs = np.array([float(x) for x in lines[pos + 1].split()])
        if head.startswith("params"):
            action = np.array([float(x) for x in head.split()[1:]])
        else:
            try:
                action = int(head)
            except ValueError:
                raise PolicyFormatError(f"bad action line {head!r}") from None
        if declared is not None and coeffs.shape[0] != declared:
            raise PolicyFormatError(
                f"vector has {coeffs.shape[0]} coefficients, header declares {declared}"
            )
        vectors.append(AlphaVector(coeffs, action))
        pos += 2
    if not vectors:
        raise PolicyFormatError("policy file contains no vectors")
    return ValueFunction(vectors)


def load_model(path) -> Pomdp:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_pomdp(fh.read())


def save_model(path, model: Pomdp):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_pomdp(model))


def load_policy(path) -> ValueFunction:
    with open(path, "r", encoding="utf-8") as fh:
        return read_policy(fh.read())


def save_policy(path, vf: ValueFunction):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(write_policy(vf))
