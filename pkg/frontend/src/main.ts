import { ServiceClient } from "./api.js";
import { App } from "./actions.js";

function bootstrap(): void {
  const root = document.getElementById("app");
  const textarea = document.getElementById("document-input") as HTMLTextAreaElement;
  const startButton = document.getElementById("start-session") as HTMLButtonElement;
  if (!root || !textarea || !startButton) {
    throw new Error("missing page scaffold elements");
  }
  const client = new ServiceClient("", (input, init) => fetch(input, init));
  const app = new App(root, client);
  app.paint();
  startButton.addEventListener("click", () => {
    void app.start(textarea.value);
  });
}

bootstrap();
