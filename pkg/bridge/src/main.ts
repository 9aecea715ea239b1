/**
 * Bridge CLI.
 *
 *   node dist/main.js --mode oracle                      # stdio (default)
 *   node dist/main.js --mode oracle --transport tcp --port 0
 *
 * Modes:
 *   oracle          built-in forward-chaining oracle (conformance reference)
 *   echo            candidate = the request's state text (never a valid rule)
 *   crash-callable  the callable throws; the adapter answers with an
 *                   empty-candidate error response and stays alive
 *   garbage         writes a non-JSON line (protocol-violation fixture)
 *
 * In TCP mode the bound port is printed as "PORT <n>" on stdout before
 * serving; stdio mode keeps stdout strictly for protocol lines.
 */

import { parseArgs } from "node:util";
import { Callable, ProposerAdapter } from "./adapter.js";
import { oracleNextStep } from "./logic.js";
import { adapterHandler, LineHandler, serveStdio, serveTcp } from "./transports.js";

export function makeCallable(mode: string): Callable {
  switch (mode) {
    case "oracle":
      return (state) => [oracleNextStep(state)];
    case "echo":
      return (state) => [state];
    case "crash-callable":
      return () => {
        throw new Error("synthetic callable failure");
      };
    default:
      throw new Error(`unknown mode ${mode}`);
  }
}

function makeHandler(mode: string, maxCandidates: number): LineHandler {
  if (mode === "garbage") {
    return async () => "banana";
  }
  const adapter = new ProposerAdapter(makeCallable(mode), { maxCandidates });
  return adapterHandler(adapter);
}

async function main(): Promise<void> {
  const { values } = parseArgs({
    options: {
      mode: { type: "string", default: "oracle" },
      transport: { type: "string", default: "stdio" },
      port: { type: "string", default: "0" },
      host: { type: "string", default: "127.0.0.1" },
      "max-candidates": { type: "string", default: "16" },
    },
  });
  const handler = makeHandler(values.mode!, Number(values["max-candidates"]));
  if (values.transport === "stdio") {
    await serveStdio(handler);
  } else if (values.transport === "tcp") {
    await serveTcp(handler, {
      host: values.host,
      port: Number(values.port),
      onListen: (port) => {
        process.stdout.write(`PORT ${port}\n`);
      },
    });
  } else {
    throw new Error(`unknown transport ${values.transport}`);
  }
}

main().catch((exc) => {
  process.stderr.write(`bridge: ${(exc as Error).message}\n`);
  process.exit(1);
});
