//! Textual model language and result documents.
//!
//! The model language is line-oriented with three declaration kinds:
//!
//! ```text
//! logvar E {alice,bob,charlie}
//! prv Comp(E) range {low,medium,high}
//! parfactor g1(Comp(E),Rev()) uniform
//! parfactor g2(Rev(),->Sal(E)) where (E) in {(alice),(bob)} table {
//! (low,low)=1.2500000000000000e0
//! ...
//! }
//! ```
//!
//! `->` marks the child argument of a parfactor. `uniform` is shorthand for
//! an all-ones table. Serialisation is canonical: declaration order is
//! preserved, constraint tuples are listed in domain order, and potentials
//! are printed with 17 significant digits so that parsing the output
//! reproduces the model bit-exactly.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::causal::{DoAnswer, DoQuery, TargetRef};
use crate::ground::GroundModel;
use crate::infer::Distribution;
use crate::model::{
    Constraint, EdgeDir, GroundAtom, LogVar, Model, Parfactor, Prv, Tuples,
};

/// A model text together with its origin, for error reporting.
#[derive(Debug, Clone)]
pub struct ModelSource {
    pub text: String,
    pub origin: String,
}

impl ModelSource {
    pub fn new(text: impl Into<String>, origin: impl Into<String>) -> Self {
        ModelSource {
            text: text.into(),
            origin: origin.into(),
        }
    }

    pub fn from_text(text: impl Into<String>) -> Self {
        ModelSource::new(text, "<string>")
    }
}

/// Positioned syntax error. Line and column are 1-based.
#[derive(Debug, Clone)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub snippet: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        write!(f, "  | {}", self.snippet)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Equals,
    Arrow,
    Pipe,
    Semi,
    KwLogvar,
    KwPrv,
    KwParfactor,
    KwRange,
    KwWhere,
    KwIn,
    KwUniform,
    KwTable,
    KwDo,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Equals => "`=`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Semi => "`;`".into(),
            Tok::KwLogvar => "`logvar`".into(),
            Tok::KwPrv => "`prv`".into(),
            Tok::KwParfactor => "`parfactor`".into(),
            Tok::KwRange => "`range`".into(),
            Tok::KwWhere => "`where`".into(),
            Tok::KwIn => "`in`".into(),
            Tok::KwUniform => "`uniform`".into(),
            Tok::KwTable => "`table`".into(),
            Tok::KwDo => "`do`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    lines: Vec<&'a str>,
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
}

struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            lines: src.lines().collect(),
            chars: src.chars().collect(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn snippet(&self, line: usize) -> String {
        self.lines
            .get(line.saturating_sub(1))
            .map(|s| s.to_string())
            .unwrap_or_default()
    }

    fn error(&self, line: usize, col: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line,
            column: col,
            message: message.into(),
            snippet: self.snippet(line),
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn tokenize(mut self) -> Result<(Vec<Spanned>, LexInfo<'a>), ParseError> {
        let mut out = Vec::new();
        loop {
            while matches!(self.peek(), Some(c) if c.is_whitespace()) {
                self.bump();
            }
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else {
                out.push(Spanned {
                    tok: Tok::Eof,
                    line,
                    col,
                });
                break;
            };
            let tok = match c {
                '{' => {
                    self.bump();
                    Tok::LBrace
                }
                '}' => {
                    self.bump();
                    Tok::RBrace
                }
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                '=' => {
                    self.bump();
                    Tok::Equals
                }
                '|' => {
                    self.bump();
                    Tok::Pipe
                }
                ';' => {
                    self.bump();
                    Tok::Semi
                }
                '-' => {
                    self.bump();
                    match self.peek() {
                        Some('>') => {
                            self.bump();
                            Tok::Arrow
                        }
                        Some(d) if d.is_ascii_digit() || d == '.' => {
                            self.number(line, col, true)?
                        }
                        _ => return Err(self.error(line, col, "expected `->` or a number")),
                    }
                }
                d if d.is_ascii_digit() || d == '.' || d == '+' => {
                    if d == '+' {
                        self.bump();
                    }
                    self.number(line, col, false)?
                }
                a if a.is_alphabetic() || a == '_' => {
                    let mut s = String::new();
                    while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_' || c == '\'') {
                        s.push(self.bump().unwrap());
                    }
                    match s.as_str() {
                        "logvar" => Tok::KwLogvar,
                        "prv" => Tok::KwPrv,
                        "parfactor" => Tok::KwParfactor,
                        "range" => Tok::KwRange,
                        "where" => Tok::KwWhere,
                        "in" => Tok::KwIn,
                        "uniform" => Tok::KwUniform,
                        "table" => Tok::KwTable,
                        "do" => Tok::KwDo,
                        _ => Tok::Ident(s),
                    }
                }
                other => {
                    return Err(self.error(line, col, format!("unexpected character `{other}`")))
                }
            };
            out.push(Spanned { tok, line, col });
        }
        let info = LexInfo {
            lines: self.lines,
            _src: self.src,
        };
        Ok((out, info))
    }

    fn number(&mut self, line: usize, col: usize, negative: bool) -> Result<Tok, ParseError> {
        let mut s = String::new();
        if negative {
            s.push('-');
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            s.push(self.bump().unwrap());
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            s.push(self.bump().unwrap());
            if matches!(self.peek(), Some('+') | Some('-')) {
                s.push(self.bump().unwrap());
            }
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                s.push(self.bump().unwrap());
            }
        }
        s.parse::<f64>()
            .map(Tok::Number)
            .map_err(|_| self.error(line, col, format!("malformed number `{s}`")))
    }
}

struct LexInfo<'a> {
    lines: Vec<&'a str>,
    _src: &'a str,
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    info: LexInfo<'a>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let (toks, info) = Lexer::new(src).tokenize()?;
        Ok(Parser { toks, info, pos: 0 })
    }

    fn peek(&self) -> &Spanned {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn bump(&mut self) -> &Spanned {
        let i = self.pos.min(self.toks.len() - 1);
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        &self.toks[i]
    }

    fn error_at(&self, sp: &Spanned, message: impl Into<String>) -> ParseError {
        ParseError {
            line: sp.line,
            column: sp.col,
            message: message.into(),
            snippet: self
                .info
                .lines
                .get(sp.line.saturating_sub(1))
                .map(|s| s.to_string())
                .unwrap_or_default(),
        }
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        self.error_at(self.peek(), message)
    }

    fn expect(&mut self, want: Tok) -> Result<(usize, usize), ParseError> {
        let sp = self.peek();
        if sp.tok == want {
            let at = (sp.line, sp.col);
            self.bump();
            Ok(at)
        } else {
            Err(self.error_here(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().tok.describe()
            )))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().tok.clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.error_here(format!("expected {what}, found {}", other.describe()))),
        }
    }

    fn ident_list_braced(&mut self, what: &str) -> Result<Vec<String>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut out = vec![self.ident(what)?];
        while self.peek().tok == Tok::Comma {
            self.bump();
            out.push(self.ident(what)?);
        }
        self.expect(Tok::RBrace)?;
        Ok(out)
    }
}

/// Parses a model. Validation is not applied; the caller decides when to
/// run [`Model::validate`]. Syntax errors, duplicate declarations, and
/// references to undeclared names are reported with positions.
pub fn parse_model(src: &ModelSource) -> Result<Model, ParseError> {
    let mut p = Parser::new(&src.text)?;
    let mut model = Model::default();
    let mut logvar_ids: HashMap<String, usize> = HashMap::new();
    let mut decl_count = 0usize;

    loop {
        let sp = p.peek();
        match sp.tok {
            Tok::Eof => break,
            Tok::KwLogvar => {
                p.bump();
                let name = p.ident("logvar name")?;
                if logvar_ids.contains_key(&name) {
                    return Err(p.error_here(format!("duplicate declaration of logvar `{name}`")));
                }
                let domain = p.ident_list_braced("constant")?;
                logvar_ids.insert(name.clone(), model.logvars.len());
                model.logvars.push(LogVar { name, domain });
            }
            Tok::KwPrv => {
                p.bump();
                let name = p.ident("prv name")?;
                p.expect(Tok::LParen)?;
                let mut params = Vec::new();
                if p.peek().tok != Tok::RParen {
                    loop {
                        let lv_name = p.ident("logvar name")?;
                        let Some(&lv) = logvar_ids.get(&lv_name) else {
                            return Err(p.error_here(format!("undeclared logvar `{lv_name}`")));
                        };
                        params.push(lv);
                        if p.peek().tok == Tok::Comma {
                            p.bump();
                        } else {
                            break;
                        }
                    }
                }
                p.expect(Tok::RParen)?;
                if model
                    .prvs
                    .iter()
                    .any(|x| x.name == name && x.params.len() == params.len())
                {
                    return Err(p.error_here(format!("duplicate declaration of prv `{name}`")));
                }
                p.expect(Tok::KwRange)?;
                let range = p.ident_list_braced("range value")?;
                model.prvs.push(Prv {
                    name,
                    params,
                    range,
                });
            }
            Tok::KwParfactor => {
                p.bump();
                let pf = parse_parfactor(&mut p, &model, &logvar_ids)?;
                if model.parfactors.iter().any(|x| x.name == pf.name) {
                    return Err(p.error_here(format!(
                        "duplicate declaration of parfactor `{}`",
                        pf.name
                    )));
                }
                model.parfactors.push(pf);
            }
            _ => {
                return Err(p.error_here(format!(
                    "expected declaration (`logvar`, `prv`, or `parfactor`), found {}",
                    sp.tok.describe()
                )))
            }
        }
        decl_count += 1;
    }

    if decl_count == 0 {
        return Err(ParseError {
            line: 1,
            column: 1,
            message: "expected declaration".into(),
            snippet: src.text.lines().next().unwrap_or("").to_string(),
        });
    }
    Ok(model)
}

fn parse_parfactor(
    p: &mut Parser,
    model: &Model,
    logvar_ids: &HashMap<String, usize>,
) -> Result<Parfactor, ParseError> {
    let name = p.ident("parfactor name")?;
    p.expect(Tok::LParen)?;
    let mut args = Vec::new();
    let mut edge_dirs = Vec::new();
    loop {
        let mut dir = EdgeDir::Undirected;
        if p.peek().tok == Tok::Arrow {
            p.bump();
            dir = EdgeDir::Child;
        }
        let prv_name = p.ident("prv name")?;
        p.expect(Tok::LParen)?;
        let mut lv_names = Vec::new();
        if p.peek().tok != Tok::RParen {
            loop {
                lv_names.push(p.ident("logvar name")?);
                if p.peek().tok == Tok::Comma {
                    p.bump();
                } else {
                    break;
                }
            }
        }
        p.expect(Tok::RParen)?;
        let Some(prv) = model.find_prv(&prv_name, lv_names.len()) else {
            return Err(p.error_here(format!(
                "undeclared prv `{}/{}`",
                prv_name,
                lv_names.len()
            )));
        };
        // The argument's logvars must match the declaration; a PRV is the
        // pairing of a name with its logvar sequence.
        for (i, lv_name) in lv_names.iter().enumerate() {
            let declared = model.prvs[prv].params[i];
            match logvar_ids.get(lv_name) {
                Some(&lv) if lv == declared => {}
                Some(_) => {
                    return Err(p.error_here(format!(
                        "prv `{prv_name}` is declared over logvar `{}`, not `{lv_name}`",
                        model.logvars[model.prvs[prv].params[i]].name
                    )))
                }
                None => return Err(p.error_here(format!("undeclared logvar `{lv_name}`"))),
            }
        }
        args.push(prv);
        edge_dirs.push(dir);
        if p.peek().tok == Tok::Comma {
            p.bump();
        } else {
            break;
        }
    }
    p.expect(Tok::RParen)?;

    let pf_logvars = {
        let mut seen = Vec::new();
        for &arg in &args {
            for &lv in &model.prvs[arg].params {
                if !seen.contains(&lv) {
                    seen.push(lv);
                }
            }
        }
        seen
    };

    let mut tuples = Tuples::Top;
    if p.peek().tok == Tok::KwWhere {
        p.bump();
        let where_sp = (p.peek().line, p.peek().col);
        p.expect(Tok::LParen)?;
        let mut cons_lvs = Vec::new();
        loop {
            let lv_name = p.ident("logvar name")?;
            let Some(&lv) = logvar_ids.get(&lv_name) else {
                return Err(p.error_here(format!("undeclared logvar `{lv_name}`")));
            };
            cons_lvs.push(lv);
            if p.peek().tok == Tok::Comma {
                p.bump();
            } else {
                break;
            }
        }
        p.expect(Tok::RParen)?;
        if cons_lvs != pf_logvars {
            let want: Vec<&str> = pf_logvars
                .iter()
                .map(|&lv| model.logvars[lv].name.as_str())
                .collect();
            return Err(ParseError {
                line: where_sp.0,
                column: where_sp.1,
                message: format!(
                    "constraint logvars must be exactly ({}) in argument order",
                    want.join(",")
                ),
                snippet: p
                    .info
                    .lines
                    .get(where_sp.0.saturating_sub(1))
                    .map(|s| s.to_string())
                    .unwrap_or_default(),
            });
        }
        p.expect(Tok::KwIn)?;
        p.expect(Tok::LBrace)?;
        let mut set = Vec::new();
        loop {
            p.expect(Tok::LParen)?;
            let mut tuple = Vec::new();
            for (i, &lv) in cons_lvs.iter().enumerate() {
                if i > 0 {
                    p.expect(Tok::Comma)?;
                }
                let c = p.ident("constant")?;
                let Some(idx) = model.constant_index(lv, &c) else {
                    return Err(p.error_here(format!(
                        "constant `{c}` is not in the domain of `{}`",
                        model.logvars[lv].name
                    )));
                };
                tuple.push(idx);
            }
            p.expect(Tok::RParen)?;
            if set.contains(&tuple) {
                return Err(p.error_here("duplicate constraint tuple"));
            }
            set.push(tuple);
            if p.peek().tok == Tok::Comma {
                p.bump();
            } else {
                break;
            }
        }
        p.expect(Tok::RBrace)?;
        set.sort();
        tuples = Tuples::Explicit(set);
    }

    let dims: Vec<usize> = args.iter().map(|&a| model.prvs[a].range.len()).collect();
    let table_len: usize = dims.iter().product();
    let table = match p.peek().tok.clone() {
        Tok::KwUniform => {
            p.bump();
            vec![1.0; table_len]
        }
        Tok::KwTable => {
            p.bump();
            p.expect(Tok::LBrace)?;
            let mut values = vec![None; table_len];
            while p.peek().tok == Tok::LParen {
                p.bump();
                let mut tuple = Vec::new();
                for (i, &arg) in args.iter().enumerate() {
                    if i > 0 {
                        p.expect(Tok::Comma)?;
                    }
                    let v = p.ident("range value")?;
                    let Some(idx) = model.range_index(arg, &v) else {
                        return Err(p.error_here(format!(
                            "value `{v}` is not in the range of `{}`",
                            model.prvs[arg].name
                        )));
                    };
                    tuple.push(idx);
                }
                p.expect(Tok::RParen)?;
                p.expect(Tok::Equals)?;
                let num = match p.peek().tok {
                    Tok::Number(n) => {
                        p.bump();
                        n
                    }
                    _ => return Err(p.error_here("expected a number after `=`")),
                };
                let idx = crate::model::row_major_index(&tuple, &dims);
                if values[idx].is_some() {
                    return Err(p.error_here("duplicate table row"));
                }
                values[idx] = Some(num);
            }
            p.expect(Tok::RBrace)?;
            if let Some(missing) = values.iter().position(|v| v.is_none()) {
                let tuple = unflatten(missing, &dims);
                let names: Vec<&str> = tuple
                    .iter()
                    .zip(&args)
                    .map(|(&v, &a)| model.prvs[a].range[v].as_str())
                    .collect();
                return Err(p.error_here(format!("table row missing for ({})", names.join(","))));
            }
            values.into_iter().map(|v| v.unwrap()).collect()
        }
        other => {
            return Err(p.error_here(format!(
                "expected `uniform` or `table`, found {}",
                other.describe()
            )))
        }
    };

    Ok(Parfactor {
        name,
        args,
        edge_dirs,
        table: Arc::new(table),
        constraint: Constraint {
            logvars: pf_logvars,
            tuples,
        },
    })
}

fn unflatten(mut idx: usize, dims: &[usize]) -> Vec<usize> {
    let mut tuple = vec![0; dims.len()];
    for i in (0..dims.len()).rev() {
        tuple[i] = idx % dims[i];
        idx /= dims[i];
    }
    tuple
}

fn fmt_potential(v: f64) -> String {
    // 17 significant digits round-trip any f64.
    format!("{v:.16e}")
}

/// Canonical text form of a model. Declaration order is preserved; tables
/// whose entries are all exactly 1.0 print as `uniform`.
pub fn serialize_model(m: &Model) -> String {
    let mut out = String::new();
    for lv in &m.logvars {
        out.push_str(&format!("logvar {} {{{}}}\n", lv.name, lv.domain.join(",")));
    }
    for prv in &m.prvs {
        let params: Vec<&str> = prv
            .params
            .iter()
            .map(|&lv| m.logvars[lv].name.as_str())
            .collect();
        out.push_str(&format!(
            "prv {}({}) range {{{}}}\n",
            prv.name,
            params.join(","),
            prv.range.join(",")
        ));
    }
    for pf in &m.parfactors {
        let args: Vec<String> = pf
            .args
            .iter()
            .zip(&pf.edge_dirs)
            .map(|(&a, dir)| {
                let prv = &m.prvs[a];
                let params: Vec<&str> = prv
                    .params
                    .iter()
                    .map(|&lv| m.logvars[lv].name.as_str())
                    .collect();
                let mark = if *dir == EdgeDir::Child { "->" } else { "" };
                format!("{}{}({})", mark, prv.name, params.join(","))
            })
            .collect();
        out.push_str(&format!("parfactor {}({})", pf.name, args.join(",")));
        if let Tuples::Explicit(tuples) = &pf.constraint.tuples {
            let lvs: Vec<&str> = pf
                .constraint
                .logvars
                .iter()
                .map(|&lv| m.logvars[lv].name.as_str())
                .collect();
            let mut sorted = tuples.clone();
            sorted.sort();
            let tuple_strs: Vec<String> = sorted
                .iter()
                .map(|t| {
                    let cs: Vec<&str> = t
                        .iter()
                        .zip(&pf.constraint.logvars)
                        .map(|(&c, &lv)| m.logvars[lv].domain[c].as_str())
                        .collect();
                    format!("({})", cs.join(","))
                })
                .collect();
            out.push_str(&format!(
                " where ({}) in {{{}}}",
                lvs.join(","),
                tuple_strs.join(",")
            ));
        }
        if pf.table.iter().all(|&v| v == 1.0) {
            out.push_str(" uniform\n");
        } else {
            out.push_str(" table {\n");
            let dims: Vec<usize> = pf.args.iter().map(|&a| m.prvs[a].range.len()).collect();
            for (idx, &v) in pf.table.iter().enumerate() {
                let tuple = unflatten(idx, &dims);
                let names: Vec<&str> = tuple
                    .iter()
                    .zip(&pf.args)
                    .map(|(&t, &a)| m.prvs[a].range[t].as_str())
                    .collect();
                out.push_str(&format!("({})={}\n", names.join(","), fmt_potential(v)));
            }
            out.push_str("}\n");
        }
    }
    out
}

/// Dumps a ground model as a model file with parameterless PRVs. Atom names
/// are mangled (`Comp(alice)` becomes `Comp_alice`) to stay inside the
/// identifier grammar.
pub fn serialize_ground_model(gm: &GroundModel) -> String {
    let mut m = Model::default();
    let mut names_used: HashMap<String, usize> = HashMap::new();
    for atom in &gm.atoms {
        let base = atom.name.replace(['(', ')'], "_").replace(',', "_");
        let base = base.trim_end_matches('_').to_string();
        let n = names_used.entry(base.clone()).or_insert(0);
        let name = if *n == 0 { base } else { format!("{}_{}", base, n) };
        *n += 1;
        m.prvs.push(Prv {
            name,
            params: vec![],
            range: atom.range.as_ref().clone(),
        });
    }
    for (i, f) in gm.factors.iter().enumerate() {
        let mut edge_dirs = vec![EdgeDir::Undirected; f.atoms.len()];
        if let Some(c) = f.child {
            edge_dirs[c] = EdgeDir::Child;
        }
        m.parfactors.push(Parfactor {
            name: format!("{}_{}", f.name, i),
            args: f.atoms.clone(),
            edge_dirs,
            table: f.table.clone(),
            constraint: Constraint {
                logvars: vec![],
                tuples: Tuples::Top,
            },
        });
    }
    serialize_model(&m)
}

// ---------------------------------------------------------------------------
// Query expressions
// ---------------------------------------------------------------------------

/// A parsed query expression.
#[derive(Debug, Clone)]
pub enum ParsedQuery {
    /// `P(Q,... | E1=e1, ...)`
    Observational {
        query: Vec<GroundAtom>,
        evidence: Vec<(GroundAtom, usize)>,
    },
    /// `P(Q,... | do(T1=t1, ...))`
    Interventional(DoQuery),
}

/// One term of a query: a ground atom or a whole PRV written with its
/// declared logvar names.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryTerm {
    Atom(GroundAtom),
    Prv(crate::model::PrvId),
}

fn parse_term(p: &mut Parser, m: &Model) -> Result<QueryTerm, ParseError> {
    let sp_line = p.peek().line;
    let sp_col = p.peek().col;
    let name = p.ident("random variable")?;
    let mut idents = Vec::new();
    if p.peek().tok == Tok::LParen {
        p.bump();
        if p.peek().tok != Tok::RParen {
            loop {
                idents.push(p.ident("constant or logvar")?);
                if p.peek().tok == Tok::Comma {
                    p.bump();
                } else {
                    break;
                }
            }
        }
        p.expect(Tok::RParen)?;
    }
    let Some(prv) = m.find_prv(&name, idents.len()) else {
        return Err(p.error_at(
            &Spanned {
                tok: Tok::Ident(name.clone()),
                line: sp_line,
                col: sp_col,
            },
            format!("unknown random variable `{}/{}`", name, idents.len()),
        ));
    };
    if idents.is_empty() {
        return Ok(QueryTerm::Atom(GroundAtom { prv, args: vec![] }));
    }
    let declared: Vec<&str> = m.prvs[prv]
        .params
        .iter()
        .map(|&lv| m.logvars[lv].name.as_str())
        .collect();
    if idents.iter().map(String::as_str).eq(declared.iter().copied()) {
        return Ok(QueryTerm::Prv(prv));
    }
    let mut args = Vec::new();
    for (i, ident) in idents.iter().enumerate() {
        let lv = m.prvs[prv].params[i];
        let Some(c) = m.constant_index(lv, ident) else {
            return Err(p.error_here(format!(
                "`{ident}` is neither a constant of `{}` nor the declared logvar",
                m.logvars[lv].name
            )));
        };
        args.push(c);
    }
    Ok(QueryTerm::Atom(GroundAtom { prv, args }))
}

fn parse_value_for(p: &mut Parser, m: &Model, prv: crate::model::PrvId) -> Result<usize, ParseError> {
    let v = p.ident("range value")?;
    m.range_index(prv, &v).ok_or_else(|| {
        p.error_here(format!(
            "value `{v}` is not in the range of `{}`",
            m.prvs[prv].name
        ))
    })
}

/// Parses a query expression such as `P(Rev | do(Comp(alice)=high))` or
/// `P(Rev | Comp(alice)=high)`. Whole-PRV targets are written with their
/// declared logvar names, e.g. `do(Comp(E)=high)`.
pub fn parse_query(m: &Model, text: &str) -> Result<ParsedQuery, ParseError> {
    let mut p = Parser::new(text)?;
    let name = p.ident("query head `P`")?;
    if name != "P" {
        return Err(p.error_here("query must start with `P(`"));
    }
    p.expect(Tok::LParen)?;
    let mut query = Vec::new();
    loop {
        match parse_term(&mut p, m)? {
            QueryTerm::Atom(a) => query.push(a),
            QueryTerm::Prv(prv) => {
                return Err(p.error_here(format!(
                    "query term `{}` must be a ground or parameterless variable",
                    m.prvs[prv].name
                )))
            }
        }
        if p.peek().tok == Tok::Comma {
            p.bump();
        } else {
            break;
        }
    }

    let parsed = if p.peek().tok == Tok::Pipe {
        p.bump();
        if p.peek().tok == Tok::KwDo {
            p.bump();
            p.expect(Tok::LParen)?;
            let mut targets = Vec::new();
            loop {
                let term = parse_term(&mut p, m)?;
                p.expect(Tok::Equals)?;
                let target = match term {
                    QueryTerm::Atom(a) => {
                        let value = parse_value_for(&mut p, m, a.prv)?;
                        (TargetRef::Atom(a), value)
                    }
                    QueryTerm::Prv(prv) => {
                        let value = parse_value_for(&mut p, m, prv)?;
                        (TargetRef::Prv(prv), value)
                    }
                };
                targets.push(target);
                if p.peek().tok == Tok::Comma {
                    p.bump();
                } else {
                    break;
                }
            }
            p.expect(Tok::RParen)?;
            ParsedQuery::Interventional(DoQuery { query, targets })
        } else if p.peek().tok == Tok::RParen {
            ParsedQuery::Observational {
                query,
                evidence: vec![],
            }
        } else {
            let mut evidence = Vec::new();
            loop {
                let term = parse_term(&mut p, m)?;
                let QueryTerm::Atom(a) = term else {
                    return Err(p.error_here("evidence must name ground atoms"));
                };
                p.expect(Tok::Equals)?;
                let value = parse_value_for(&mut p, m, a.prv)?;
                evidence.push((a, value));
                if p.peek().tok == Tok::Comma {
                    p.bump();
                } else {
                    break;
                }
            }
            ParsedQuery::Observational { query, evidence }
        }
    } else {
        ParsedQuery::Observational {
            query,
            evidence: vec![],
        }
    };
    p.expect(Tok::RParen)?;
    if p.peek().tok != Tok::Eof {
        return Err(p.error_here("trailing input after query"));
    }
    Ok(parsed)
}

/// Canonical rendering of a parsed query, used in result documents.
pub fn render_query(m: &Model, q: &ParsedQuery) -> String {
    match q {
        ParsedQuery::Observational { query, evidence } => {
            let qs: Vec<String> = query.iter().map(|a| m.atom_name(a)).collect();
            if evidence.is_empty() {
                format!("P({})", qs.join(","))
            } else {
                let evs: Vec<String> = evidence
                    .iter()
                    .map(|(a, v)| format!("{}={}", m.atom_name(a), m.prvs[a.prv].range[*v]))
                    .collect();
                format!("P({} | {})", qs.join(","), evs.join(","))
            }
        }
        ParsedQuery::Interventional(dq) => {
            let qs: Vec<String> = dq.query.iter().map(|a| m.atom_name(a)).collect();
            let ts: Vec<String> = dq
                .targets
                .iter()
                .map(|(t, v)| format!("{}={}", t.render(m), m.prvs[t.prv()].range[*v]))
                .collect();
            format!("P({} | do({}))", qs.join(","), ts.join(","))
        }
    }
}

// ---------------------------------------------------------------------------
// Separation queries
// ---------------------------------------------------------------------------

/// Parses a separation query `X1,... ; Y1,... | Z1,...` where the terms are
/// ground atoms (or whole PRVs when `lifted` callers expect them).
pub fn parse_sep_sets(m: &Model, text: &str) -> Result<[Vec<QueryTerm>; 3], ParseError> {
    let mut p = Parser::new(text)?;
    let mut sets: [Vec<QueryTerm>; 3] = [vec![], vec![], vec![]];
    for (i, set) in sets.iter_mut().enumerate() {
        loop {
            if i == 2 && p.peek().tok == Tok::Eof && set.is_empty() {
                break;
            }
            set.push(parse_term(&mut p, m)?);
            if p.peek().tok == Tok::Comma {
                p.bump();
            } else {
                break;
            }
        }
        if i == 0 {
            p.expect(Tok::Semi)?;
        } else if i == 1 {
            if p.peek().tok == Tok::Pipe {
                p.bump();
            } else if p.peek().tok != Tok::Eof {
                return Err(p.error_here("expected `|` or end of query"));
            }
        }
    }
    if p.peek().tok != Tok::Eof {
        return Err(p.error_here("trailing input after separation query"));
    }
    Ok(sets)
}

// ---------------------------------------------------------------------------
// Result documents
// ---------------------------------------------------------------------------

fn distribution_json(m: &Model, d: &Distribution) -> serde_json::Value {
    let mut probs = serde_json::Map::new();
    for (tuple, p) in d.entries() {
        let names: Vec<&str> = tuple
            .iter()
            .zip(&d.atoms_prvs)
            .map(|(&v, &prv)| m.prvs[prv].range[v].as_str())
            .collect();
        probs.insert(names.join(","), serde_json::json!(p));
    }
    serde_json::Value::Object(probs)
}

/// Renders a query answer as a deterministic JSON document with fields
/// `query`, `unique`, and `distributions`.
pub fn emit_result(m: &Model, query: &str, answer: &DoAnswer) -> String {
    let mut distributions = Vec::new();
    for res in &answer.results {
        let mut entry = serde_json::Map::new();
        let mut choice = serde_json::Map::new();
        if let Some(first) = res.choices.first() {
            for (target, selected) in &first.per_target {
                let names: Vec<String> = selected.iter().map(|n| n.render(m)).collect();
                choice.insert(
                    target.render(m),
                    serde_json::json!(format!("{{{}}}", names.join(","))),
                );
            }
        }
        entry.insert("parent_choice".into(), serde_json::Value::Object(choice));
        entry.insert(
            "probabilities".into(),
            distribution_json(m, &res.distribution),
        );
        distributions.push(serde_json::Value::Object(entry));
    }
    let doc = serde_json::json!({
        "query": query,
        "unique": answer.unique,
        "distributions": distributions,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("document serialisation");
    s.push('\n');
    s
}
