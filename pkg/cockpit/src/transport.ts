// Transport abstraction: the session logic only needs text lines out, text
// lines + binary frames in. Browsers use the WebSocket implementation below;
// tests drive the same session code over raw TCP from node.

export interface Transport {
  send(text: string): void;
  onText(cb: (line: string) => void): void;
  onBinary(cb: (msg: Uint8Array) => void): void;
  onClose(cb: () => void): void;
  close(): void;
}

export type TransportFactory = () => Promise<Transport>;

export function webSocketTransport(address: string): Promise<Transport> {
  return new Promise((resolve, reject) => {
    const ws = new WebSocket(address);
    ws.binaryType = "arraybuffer";
    let textCb: (line: string) => void = () => {};
    let binCb: (msg: Uint8Array) => void = () => {};
    let closeCb: () => void = () => {};
    let opened = false;

    ws.onopen = () => {
      opened = true;
      resolve({
        send: (text) => ws.send(text),
        onText: (cb) => (textCb = cb),
        onBinary: (cb) => (binCb = cb),
        onClose: (cb) => (closeCb = cb),
        close: () => ws.close(),
      });
    };
    ws.onerror = () => {
      if (!opened) reject(new Error(`cannot connect to ${address}`));
    };
    ws.onclose = () => {
      if (!opened) reject(new Error(`connection refused: ${address}`));
      else closeCb();
    };
    ws.onmessage = (event) => {
      if (typeof event.data === "string") {
        for (const line of event.data.split("\n")) {
          if (line.trim()) textCb(line);
        }
      } else {
        binCb(new Uint8Array(event.data as ArrayBuffer));
      }
    };
  });
}
