package com.vuldroid.application;

import android.content.Intent;
import android.os.Bundle;
import android.widget.Button;
import android.widget.EditText;

import androidx.appcompat.app.AppCompatActivity;

public class SendMsgtoApp extends AppCompatActivity {

    @Override
    protected void onCreate(Bundle savedInstanceState) {
        super.onCreate(savedInstanceState);
        setContentView(R.layout.activity_send_msg);

        EditText message = findViewById(R.id.message);
        Button send = findViewById(R.id.sendButton);
        send.setOnClickListener(v -> {
            // implicit intent: the first app claiming the action receives the message
            Intent intent = new Intent("com.vuldroid.partner.RECEIVE_MESSAGE");
            intent.putExtra("message", message.getText().toString());
            intent.putExtra("session", getSharedPreferences("account", MODE_PRIVATE).getString("session", ""));
            startActivity(intent);
        });
    }
}
