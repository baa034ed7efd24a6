// Browser entry point: wires the controller to the page. Expects the
// element ids from index.html and a session server on the same origin
// (or ?server=http://host:port).

import { SessionApi } from "./api.js";
import { SessionController } from "./controller.js";
import { ProgressTracker } from "./progress.js";
import { renderError, renderProgress, renderQuery } from "./render.js";

function el(id: string): HTMLElement {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing #${id}`);
  return found;
}

export async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const server = params.get("server") ?? "";
  const api = new SessionApi(server);
  const tracker = new ProgressTracker();

  const treeBox = el("tree");
  const progressBox = el("progress");
  const messageBox = el("message");
  const roleButton = el("role-toggle") as HTMLButtonElement;
  const submitButton = el("submit-triplet") as HTMLButtonElement;
  const acceptButton = el("accept") as HTMLButtonElement;

  const sessionId = await api.createSession({
    scheme: (params.get("scheme") as never) ?? "interleaved",
    use_target: params.get("use_target") === "1",
  });
  const controller = new SessionController(api, sessionId);

  const redraw = () => {
    if (!controller.query || !controller.selection) return;
    try {
      renderQuery(treeBox, controller.query, controller.selection, {
        onLeafClick: (leaf) => {
          controller.clickLeaf(leaf);
          redraw();
        },
      });
    } catch (err) {
      renderError(treeBox, err instanceof Error ? err.message : String(err));
    }
    roleButton.textContent = `picking: ${controller.selection.activeRole}`;
    submitButton.disabled = !controller.canSubmit;
    acceptButton.disabled = !controller.inputEnabled;
    messageBox.textContent = controller.lastError ?? "";
  };

  const refreshProgress = async () => {
    try {
      renderProgress(progressBox, tracker.model(await controller.pollState()));
    } catch {
      // transient poll failures keep the previous panel
    }
  };

  roleButton.addEventListener("click", () => {
    controller.toggleRole();
    redraw();
  });
  submitButton.addEventListener("click", async () => {
    await controller.submitTriplet().catch(() => undefined);
    redraw();
    void refreshProgress();
  });
  acceptButton.addEventListener("click", async () => {
    await controller.accept().catch(() => undefined);
    redraw();
    void refreshProgress();
  });

  try {
    await controller.nextQuery();
  } catch {
    renderError(treeBox, controller.lastError ?? "could not reach the session");
    return;
  }
  redraw();
  void refreshProgress();
  setInterval(refreshProgress, 4000);
}

if (typeof document !== "undefined" && document.getElementById("tree")) {
  void start();
}
