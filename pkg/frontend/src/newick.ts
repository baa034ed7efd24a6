// Newick parser for the trees the server sends. Labels are leaf ids
// (nonnegative integers); branch lengths, when present on every element,
// reconstruct divergence times as root-path sums. The stored stem never
// crosses the wire: the top element is the drawn root.

export interface NewickNode {
  label: string | null;
  length: number | null;
  children: NewickNode[];
}

export class NewickError extends Error {
  constructor(
    message: string,
    readonly offset: number,
  ) {
    super(`${message} (offset ${offset})`);
    this.name = "NewickError";
  }
}

export function parseNewick(text: string): NewickNode {
  const src = text.trim();
  let pos = 0;

  const fail = (message: string): never => {
    throw new NewickError(message, pos);
  };

  const skipWs = () => {
    while (pos < src.length && /\s/.test(src[pos]!)) pos += 1;
  };

  const readLabel = (): string | null => {
    skipWs();
    const start = pos;
    while (pos < src.length && !"(),:;".includes(src[pos]!)) pos += 1;
    const label = src.slice(start, pos).trim();
    return label.length > 0 ? label : null;
  };

  const readLength = (): number | null => {
    skipWs();
    if (src[pos] !== ":") return null;
    pos += 1;
    const start = pos;
    while (pos < src.length && /[-+0-9.eE]/.test(src[pos]!)) pos += 1;
    const value = Number(src.slice(start, pos));
    if (!Number.isFinite(value)) fail("malformed branch length");
    return value;
  };

  const readNode = (): NewickNode => {
    skipWs();
    const node: NewickNode = { label: null, length: null, children: [] };
    if (src[pos] === "(") {
      pos += 1;
      for (;;) {
        node.children.push(readNode());
        skipWs();
        if (src[pos] === ",") {
          pos += 1;
          continue;
        }
        if (src[pos] === ")") {
          pos += 1;
          break;
        }
        fail("expected ',' or ')'");
      }
      if (node.children.length < 2) fail("groups need at least two members");
    }
    node.label = readLabel();
    node.length = readLength();
    if (node.children.length === 0 && node.label === null) {
      fail("leaf without a label");
    }
    return node;
  };

  const root = readNode();
  skipWs();
  if (src[pos] !== ";") fail("expected ';'");
  pos += 1;
  skipWs();
  if (pos !== src.length) fail("trailing characters after ';'");
  return root;
}

export function leafLabels(node: NewickNode): string[] {
  if (node.children.length === 0) return [node.label ?? ""];
  return node.children.flatMap(leafLabels);
}

function everyNodeHasLength(node: NewickNode): boolean {
  return node.length !== null && node.children.every(everyNodeHasLength);
}

function maxDepth(node: NewickNode): number {
  if (node.children.length === 0) return 0;
  return 1 + Math.max(...node.children.map(maxDepth));
}

/**
 * Divergence time per node, as a Map keyed by node object. When every
 * element carries a length the time is the root-path length sum (the
 * server serializes times that way, leaves land at 1); otherwise times
 * fall back to depth fractions so the layout still spreads out.
 */
export function nodeTimes(root: NewickNode): Map<NewickNode, number> {
  const times = new Map<NewickNode, number>();
  if (everyNodeHasLength(root)) {
    const walk = (node: NewickNode, base: number) => {
      const t = base + (node.length ?? 0);
      times.set(node, t);
      for (const child of node.children) walk(child, t);
    };
    walk(root, 0);
    return times;
  }
  const depthSpan = Math.max(1, maxDepth(root) + 1);
  const walk = (node: NewickNode, depth: number) => {
    times.set(node, node.children.length === 0 ? 1 : (depth + 1) / depthSpan);
    for (const child of node.children) walk(child, depth + 1);
  };
  walk(root, 0);
  return times;
}
