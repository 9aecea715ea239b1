/**
 * The proposer adapter: one request line in, exactly one response line out,
 * in order, whatever happens.
 *
 * A callable maps a serialized proof state to candidate texts.  The adapter
 * never validates candidates (the symbolic engine is the judge); it only
 * guarantees protocol shape: version-checked requests, candidate lists
 * truncated to the requested k, and callable exceptions mapped to an
 * empty-candidate error response instead of a dead process.
 */

export type Callable = (
  state: string,
  k: number,
) => string[] | Promise<string[]>;

export interface AdapterOptions {
  maxCandidates?: number;
}

export interface Request {
  v: number;
  state: string;
  k: number;
}

const MAX_LINE = 10 * 1024 * 1024;

/** Newline-framed splitter with a buffer cap; carriage returns tolerated. */
export class LineSplitter {
  private buffer = "";

  push(chunk: string): string[] {
    this.buffer += chunk;
    if (this.buffer.length > MAX_LINE) {
      this.buffer = "";
      throw new Error("line exceeds maximum length");
    }
    const parts = this.buffer.split("\n");
    this.buffer = parts.pop() ?? "";
    return parts.map((p) => p.replace(/\r$/, "")).filter((p) => p.length > 0);
  }

  flush(): string[] {
    const rest = this.buffer.trim();
    this.buffer = "";
    return rest ? [rest] : [];
  }
}

export class ProposerAdapter {
  private readonly callable: Callable;
  private readonly maxCandidates: number;

  constructor(callable: Callable, options: AdapterOptions = {}) {
    this.callable = callable;
    this.maxCandidates = options.maxCandidates ?? 16;
  }

  /** One protocol response line (without newline) for one request line. */
  async handleLine(line: string): Promise<string> {
    let request: Request;
    try {
      const parsed = JSON.parse(line);
      if (
        typeof parsed !== "object" ||
        parsed === null ||
        typeof parsed.state !== "string" ||
        typeof parsed.k !== "number"
      ) {
        return this.error("malformed request");
      }
      request = parsed as Request;
    } catch {
      return this.error("request is not JSON");
    }
    if (request.v !== 1) {
      return this.error(`unsupported protocol version ${request.v}`);
    }
    const k = Math.max(1, Math.floor(request.k));
    let candidates: string[];
    try {
      candidates = await this.callable(request.state, k);
    } catch (exc) {
      return this.error(`callable failed: ${(exc as Error).message ?? exc}`);
    }
    const bounded = candidates
      .filter((c) => typeof c === "string")
      .slice(0, Math.min(k, this.maxCandidates));
    return JSON.stringify({ v: 1, candidates: bounded });
  }

  private error(message: string): string {
    return JSON.stringify({ v: 1, candidates: [], error: message });
  }
}
