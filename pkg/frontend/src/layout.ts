// Dendrogram layout: divergence time runs along the horizontal axis
// (root left, leaves right), leaves are spaced evenly down the vertical,
// and edges render as elbow segments. Pure data in, pure data out; the
// SVG is assembled elsewhere.

import { NewickNode, nodeTimes, parseNewick } from "./newick.js";

export interface LayoutLeaf {
  leaf: number; // server-side leaf id
  name: string; // display name from the query's annotation map
  x: number;
  y: number;
}

export interface LayoutSegment {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface DendrogramLayout {
  width: number;
  height: number;
  leaves: LayoutLeaf[];
  segments: LayoutSegment[];
}

export interface LayoutOptions {
  width?: number;
  height?: number;
  padX?: number;
  padY?: number;
}

interface Placed {
  node: NewickNode;
  x: number;
  y: number;
}

export function layoutDendrogram(
  newick: string,
  names: Record<string, string>,
  options: LayoutOptions = {},
): DendrogramLayout {
  const width = options.width ?? 640;
  const height = options.height ?? 400;
  const padX = options.padX ?? 24;
  const padY = options.padY ?? 16;

  const root = parseNewick(newick);
  const times = nodeTimes(root);
  const leafOrder: NewickNode[] = [];
  const collect = (node: NewickNode) => {
    if (node.children.length === 0) leafOrder.push(node);
    else node.children.forEach(collect);
  };
  collect(root);

  const innerW = width - 2 * padX;
  const innerH = height - 2 * padY;
  const step = leafOrder.length > 1 ? innerH / (leafOrder.length - 1) : 0;
  const xOf = (node: NewickNode) => padX + (times.get(node) ?? 0) * innerW;

  const yByNode = new Map<NewickNode, number>();
  leafOrder.forEach((leaf, i) => {
    yByNode.set(leaf, leafOrder.length > 1 ? padY + i * step : padY + innerH / 2);
  });
  const placeY = (node: NewickNode): number => {
    const cached = yByNode.get(node);
    if (cached !== undefined) return cached;
    const ys = node.children.map(placeY);
    const y = ys.reduce((a, b) => a + b, 0) / ys.length;
    yByNode.set(node, y);
    return y;
  };
  placeY(root);

  const leaves: LayoutLeaf[] = leafOrder.map((node) => {
    const label = node.label ?? "";
    return {
      leaf: Number(label),
      name: names[label] ?? label,
      x: xOf(node),
      y: yByNode.get(node)!,
    };
  });

  const segments: LayoutSegment[] = [];
  const walk = (node: NewickNode) => {
    const px = xOf(node);
    const py = yByNode.get(node)!;
    for (const child of node.children) {
      const cy = yByNode.get(child)!;
      // elbow: vertical run at the parent's time, then horizontal to the child
      segments.push({ x1: px, y1: py, x2: px, y2: cy });
      segments.push({ x1: px, y1: cy, x2: xOf(child), y2: cy });
      walk(child);
    }
  };
  walk(root);

  return { width, height, leaves, segments };
}
