/**
 * Proof-state text parsing and the forward-chaining oracle.
 *
 * The state text is a single line of space-separated items, each literal
 * followed by one demarcation character:
 *
 *   cute?    the query
 *   a,b,c:   a rule (last literal before ":" concludes, the rest are premises)
 *   strong1  a fact (original and derived facts look alike)
 *   ;        starts the proof section: applied rules in application order
 *
 * The oracle answers exactly like the symbolic side expects: "True" once the
 * query is a fact, otherwise the first rule (in problem order) that has not
 * been applied and whose premises are all facts, otherwise "False".
 */

const LITERAL = /^[a-z]+$/;

export interface Rule {
  premises: string[];
  conclusion: string;
  text: string;
}

export interface ProofStateText {
  query: string;
  rules: Rule[];
  facts: Set<string>;
  applied: Set<string>; // rule texts
}

export function ruleText(premises: string[], conclusion: string): string {
  return [...premises, conclusion].join(",") + ":";
}

function parseRuleToken(token: string): Rule {
  const body = token.slice(0, -1);
  const literals = body.split(",");
  if (literals.length < 2) {
    throw new Error(`rule ${token} needs at least two literals`);
  }
  for (const lit of literals) {
    if (!LITERAL.test(lit)) {
      throw new Error(`bad literal ${lit} in rule ${token}`);
    }
  }
  const conclusion = literals[literals.length - 1];
  const premises = literals.slice(0, -1);
  return { premises, conclusion, text: token };
}

export function parseState(text: string): ProofStateText {
  if (text !== text.trim() || text.includes("  ")) {
    throw new Error("items must be separated by single spaces");
  }
  let query: string | null = null;
  const rules: Rule[] = [];
  const facts = new Set<string>();
  const applied = new Set<string>();
  let inProof = false;
  for (const token of text.split(" ")) {
    if (token === "") {
      throw new Error("empty item");
    }
    if (token === ";") {
      if (inProof) throw new Error("second proof separator");
      inProof = true;
    } else if (token === "True" || token === "False") {
      if (!inProof) throw new Error(`terminal ${token} outside proof section`);
    } else if (token.endsWith(":")) {
      const rule = parseRuleToken(token);
      if (inProof) {
        applied.add(rule.text);
      } else {
        rules.push(rule);
      }
    } else if (inProof) {
      throw new Error(`only rules allowed in proof section, got ${token}`);
    } else if (token.endsWith("?")) {
      const lit = token.slice(0, -1);
      if (!LITERAL.test(lit)) throw new Error(`bad query literal ${lit}`);
      if (query !== null) throw new Error("second query");
      query = lit;
    } else if (token.endsWith("1")) {
      const lit = token.slice(0, -1);
      if (!LITERAL.test(lit)) throw new Error(`bad fact literal ${lit}`);
      facts.add(lit);
    } else {
      throw new Error(`unclassifiable item ${token}`);
    }
  }
  if (query === null) {
    throw new Error("no query item");
  }
  return { query, rules, facts, applied };
}

/** Next oracle step for a serialized state: a rule text, "True", or "False". */
export function oracleNextStep(stateText: string): string {
  const state = parseState(stateText);
  if (state.facts.has(state.query)) {
    return "True";
  }
  for (const rule of state.rules) {
    if (state.applied.has(rule.text)) continue;
    if (rule.premises.every((p) => state.facts.has(p))) {
      return rule.text;
    }
  }
  return "False";
}
