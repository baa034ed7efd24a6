// SVG assembly for the dendrogram and the progress panel. Every render
// rebuilds its container from the given data, so a refresh with the same
// payload reproduces the identical view.

import { DendrogramLayout, layoutDendrogram } from "./layout.js";
import { ProgressModel } from "./progress.js";
import { QueryPayload } from "./api.js";
import { TripletSelection } from "./selection.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function svgEl<K extends keyof SVGElementTagNameMap>(
  doc: Document,
  tag: K,
  attrs: Record<string, string>,
): SVGElementTagNameMap[K] {
  const el = doc.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) el.setAttribute(k, v);
  return el;
}

export interface RenderHandlers {
  onLeafClick?: (leaf: number) => void;
}

/**
 * Draw one query: the induced subtree as an elbow dendrogram with every
 * leaf clickable. Selected pair leaves and the outgroup get distinct
 * classes so the stylesheet can tell them apart.
 */
export function renderQuery(
  container: HTMLElement,
  query: QueryPayload,
  selection: TripletSelection,
  handlers: RenderHandlers = {},
): DendrogramLayout {
  const doc = container.ownerDocument;
  container.replaceChildren();
  const layout = layoutDendrogram(query.newick, query.names);
  const svg = svgEl(doc, "svg", {
    viewBox: `0 0 ${layout.width} ${layout.height}`,
    width: String(layout.width),
    height: String(layout.height),
    class: "dendrogram",
  });
  for (const seg of layout.segments) {
    svg.appendChild(
      svgEl(doc, "line", {
        x1: seg.x1.toFixed(2),
        y1: seg.y1.toFixed(2),
        x2: seg.x2.toFixed(2),
        y2: seg.y2.toFixed(2),
        class: "edge",
      }),
    );
  }
  for (const leaf of layout.leaves) {
    const role = selection.roleOf(leaf.leaf);
    const group = svgEl(doc, "g", {
      class: `leaf${role ? ` selected-${role}` : ""}`,
      "data-leaf": String(leaf.leaf),
    });
    group.appendChild(
      svgEl(doc, "circle", {
        cx: leaf.x.toFixed(2),
        cy: leaf.y.toFixed(2),
        r: "6",
      }),
    );
    const text = svgEl(doc, "text", {
      x: (leaf.x + 10).toFixed(2),
      y: (leaf.y + 4).toFixed(2),
    });
    text.textContent = leaf.name;
    group.appendChild(text);
    if (handlers.onLeafClick) {
      group.addEventListener("click", () => handlers.onLeafClick!(leaf.leaf));
    }
    svg.appendChild(group);
  }
  container.appendChild(svg);
  return layout;
}

/** Replace the container with an error panel; never throws. */
export function renderError(container: HTMLElement, message: string): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  const panel = doc.createElement("div");
  panel.className = "error-panel";
  panel.setAttribute("role", "alert");
  panel.textContent = message;
  container.appendChild(panel);
}

export function renderProgress(container: HTMLElement, model: ProgressModel): void {
  const doc = container.ownerDocument;
  container.replaceChildren();

  const line = (cls: string, label: string, value: string) => {
    const div = doc.createElement("div");
    div.className = cls;
    div.textContent = `${label}: ${value}`;
    container.appendChild(div);
  };
  line("status", "status", model.status);
  line("iteration", "iteration", String(model.iteration));
  line("constraints", "constraints", String(model.constraints));

  const chart = (cls: string, path: string) => {
    const svg = svgEl(doc, "svg", {
      viewBox: "0 0 160 40",
      width: "160",
      height: "40",
      class: cls,
    });
    svg.appendChild(svgEl(doc, "path", { d: path, fill: "none" }));
    container.appendChild(svg);
  };
  chart("sparkline-logpost", model.logPosterior.path);
  if (model.tripletDistance !== null) {
    chart("sparkline-td", model.tripletDistance.path);
  }
}
