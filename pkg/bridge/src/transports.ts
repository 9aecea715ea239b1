/**
 * Transports: stdio (lines on stdin/stdout) and TCP (one client connection,
 * strictly sequential).  Both preserve request order; both exit cleanly when
 * the peer closes.
 */

import * as net from "node:net";
import { LineSplitter, ProposerAdapter } from "./adapter.js";

/** Some test callables bypass the adapter to emit deliberately broken bytes. */
export type LineHandler = (line: string) => Promise<string>;

export async function serveStdio(handle: LineHandler): Promise<void> {
  const splitter = new LineSplitter();
  process.stdin.setEncoding("utf-8");
  for await (const chunk of process.stdin) {
    for (const line of splitter.push(chunk as string)) {
      const reply = await handle(line);
      process.stdout.write(reply + "\n");
    }
  }
  for (const line of splitter.flush()) {
    const reply = await handle(line);
    process.stdout.write(reply + "\n");
  }
}

export interface TcpOptions {
  host?: string;
  port: number;
  /** Called with the bound port before serving (port 0 picks one). */
  onListen?: (port: number) => void;
}

export function serveTcp(handle: LineHandler, options: TcpOptions): Promise<void> {
  return new Promise((resolve, reject) => {
    const server = net.createServer({ allowHalfOpen: false }, (socket) => {
      server.close(); // single connection: stop accepting more
      const splitter = new LineSplitter();
      socket.setEncoding("utf-8");
      let busy = Promise.resolve();
      socket.on("data", (chunk: string) => {
        let lines: string[];
        try {
          lines = splitter.push(chunk);
        } catch (exc) {
          socket.destroy(exc as Error);
          return;
        }
        for (const line of lines) {
          busy = busy.then(async () => {
            const reply = await handle(line);
            if (!socket.destroyed) {
              socket.write(reply + "\n");
            }
          });
        }
      });
      socket.on("close", () => {
        busy.then(() => resolve());
      });
      socket.on("error", () => {
        /* peer reset: treated as close */
      });
    });
    server.on("error", reject);
    server.listen(options.port, options.host ?? "127.0.0.1", () => {
      const address = server.address() as net.AddressInfo;
      options.onListen?.(address.port);
    });
  });
}

export function adapterHandler(adapter: ProposerAdapter): LineHandler {
  return (line) => adapter.handleLine(line);
}
