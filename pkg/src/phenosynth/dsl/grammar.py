"""Reference grammar text.

The prompting layer embeds :data:`GRAMMAR` in the system prompt, so edits
here change every prompt golden file.
"""

GRAMMAR = """\
program := "phenotype" IDENT "{" stmt* "return" expr ";" "}"
stmt    := "let" IDENT "=" expr ";"
         | IDENT "=" expr ";"
         | "if" "(" expr ")" block ( "else" block )?
block   := "{" stmt* "}"
expr    := or_expr
or_expr := and_expr ( "or" and_expr )*
and_expr:= not_expr ( "and" not_expr )*
not_expr:= "not" not_expr | cmp_expr
cmp_expr:= add_expr ( ( "<" | "<=" | ">" | ">=" | "==" | "!=" ) add_expr )?
add_expr:= mul_expr ( ( "+" | "-" ) mul_expr )*
mul_expr:= unary ( ( "*" | "/" ) unary )*
unary   := "-" unary | atom
atom    := NUMBER | IDENT | BUILTIN "(" expr ( "," expr )* ")" | "(" expr ")"
BUILTIN := "min" | "max" | "clamp" | "abs"
NUMBER  := digits ( "." digits )? ( ( "e" | "E" ) ( "+" | "-" )? digits )?
IDENT   := letter ( letter | digit | "_" )*

Semantics: the program is evaluated once per patient (row). Identifiers
refer to feature columns or to earlier "let" bindings. Arithmetic is
floating point; comparisons produce true/false, which count as 1.0/0.0 in
arithmetic. An "if" guard is true when it is true or a nonzero number.
min(a, b, ...) and max(a, b, ...) take two or more arguments,
clamp(x, lo, hi) limits x to [lo, hi], abs(x) is the absolute value.
The returned value is clipped to [0, 1] and read as the probability that
the patient has the phenotype. There are no loops, strings, comments or
user-defined functions.

Example:
phenotype predict_hypertension {
  let p = 0.1;
  if (bp_n > 0 and high_bp_n / bp_n > 0.5) { p = p + 0.6; }
  return clamp(p, 0, 1);
}
"""
